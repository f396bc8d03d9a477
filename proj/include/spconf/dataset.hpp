#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace spconf {

/// Observed counts, expected counts and covariates for n areas. Row order is
/// the area index and must agree with the adjacency structure.
struct Dataset {
  Eigen::VectorXd y;          // nonnegative integer counts
  Eigen::VectorXd e;          // expected counts, > 0
  Eigen::MatrixXd X;          // n x p covariates
  Eigen::MatrixXd centroids;  // n x 2 (s1, s2), or n x 0 when unavailable
  std::vector<std::string> labels;
  std::vector<std::string> covariate_names;
  /// Location and scale removed from each raw covariate column.
  std::vector<double> covariate_means;
  std::vector<double> covariate_sds;

  int size() const { return static_cast<int>(y.size()); }
  int n_covariates() const { return static_cast<int>(X.cols()); }
  bool has_centroids() const { return centroids.cols() == 2; }

  /// Throws ValidationError on inconsistent lengths, e <= 0, negative or
  /// non-integer counts, or non-finite entries.
  void validate() const;
};

/// Centre and scale every covariate column (sample sd, n - 1) and record the
/// transformation. Throws ValidationError for a constant column.
void standardize_covariates(Dataset& d);

/// Convenience constructor: validates, fills default labels/names and
/// standardises covariates.
Dataset make_dataset(Eigen::VectorXd y, Eigen::VectorXd e, Eigen::MatrixXd X,
                     std::vector<std::string> covariate_names = {}, Eigen::MatrixXd centroids = {},
                     std::vector<std::string> labels = {});

/// Same data with the covariate matrix replaced (already on the model scale).
Dataset with_covariates(const Dataset& d, Eigen::MatrixXd X, std::vector<std::string> names);

}  // namespace spconf
