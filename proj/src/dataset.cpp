#include "spconf/dataset.hpp"

#include <cmath>

#include "spconf/errors.hpp"

namespace spconf {

void Dataset::validate() const {
  const Eigen::Index n = y.size();
  if (n < 1) throw ValidationError("dataset has no areas");
  if (e.size() != n) throw ValidationError("expected counts length does not match observed counts");
  if (X.rows() != n && !(X.cols() == 0)) throw ValidationError("covariate rows do not match observed counts");
  if (centroids.cols() != 0 && (centroids.cols() != 2 || centroids.rows() != n)) {
    throw ValidationError("centroids must be n x 2");
  }
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != n) {
    throw ValidationError("labels length does not match observed counts");
  }
  if (static_cast<Eigen::Index>(covariate_names.size()) != X.cols()) {
    throw ValidationError("covariate names do not match covariate columns");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double yi = y(i);
    if (!std::isfinite(yi) || yi < 0.0 || yi != std::floor(yi)) {
      throw ValidationError("observed count in row " + std::to_string(i + 1) + " is not a nonnegative integer");
    }
    if (!std::isfinite(e(i)) || !(e(i) > 0.0)) {
      throw ValidationError("expected count in row " + std::to_string(i + 1) + " must be positive");
    }
  }
  if (X.size() > 0 && !X.allFinite()) throw ValidationError("covariates contain non-finite values");
  if (centroids.size() > 0 && !centroids.allFinite()) throw ValidationError("centroids contain non-finite values");
}

void standardize_covariates(Dataset& d) {
  const Eigen::Index n = d.X.rows();
  d.covariate_means.assign(static_cast<std::size_t>(d.X.cols()), 0.0);
  d.covariate_sds.assign(static_cast<std::size_t>(d.X.cols()), 1.0);
  for (Eigen::Index j = 0; j < d.X.cols(); ++j) {
    const double mean = d.X.col(j).mean();
    const double sd = std::sqrt((d.X.col(j).array() - mean).square().sum() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1)));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      const std::string name = j < static_cast<Eigen::Index>(d.covariate_names.size())
                                   ? d.covariate_names[static_cast<std::size_t>(j)]
                                   : std::to_string(j + 1);
      throw ValidationError("covariate '" + name + "' is constant (zero variance); cannot standardise");
    }
    d.X.col(j) = (d.X.col(j).array() - mean) / sd;
    d.covariate_means[static_cast<std::size_t>(j)] = mean;
    d.covariate_sds[static_cast<std::size_t>(j)] = sd;
  }
}

Dataset make_dataset(Eigen::VectorXd y, Eigen::VectorXd e, Eigen::MatrixXd X, std::vector<std::string> covariate_names,
                     Eigen::MatrixXd centroids, std::vector<std::string> labels) {
  Dataset d;
  d.y = std::move(y);
  d.e = std::move(e);
  d.X = X.size() == 0 ? Eigen::MatrixXd(d.y.size(), X.cols()) : std::move(X);
  d.centroids = centroids.size() == 0 ? Eigen::MatrixXd(d.y.size(), 0) : std::move(centroids);
  if (covariate_names.empty()) {
    for (Eigen::Index j = 0; j < d.X.cols(); ++j) covariate_names.push_back("x" + std::to_string(j + 1));
  }
  d.covariate_names = std::move(covariate_names);
  if (labels.empty()) {
    for (Eigen::Index i = 0; i < d.y.size(); ++i) labels.push_back(std::to_string(i + 1));
  }
  d.labels = std::move(labels);
  d.validate();
  standardize_covariates(d);
  return d;
}

Dataset with_covariates(const Dataset& d, Eigen::MatrixXd X, std::vector<std::string> names) {
  Dataset out = d;
  out.X = std::move(X);
  out.covariate_names = std::move(names);
  out.covariate_means.assign(out.covariate_names.size(), 0.0);
  out.covariate_sds.assign(out.covariate_names.size(), 1.0);
  out.validate();
  return out;
}

}  // namespace spconf
