#include "spconf/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "spconf/errors.hpp"

namespace spconf {

SeResult se_sim_and_est(const std::vector<ParamEstimate>& est) {
  if (est.size() < 2) throw ValidationError("standard errors need at least two replicates");
  const double k = static_cast<double>(est.size());
  double m = 0.0, sd = 0.0;
  for (const auto& e : est) {
    m += e.mean;
    sd += e.sd;
  }
  m /= k;
  double ss = 0.0;
  for (const auto& e : est) ss += (e.mean - m) * (e.mean - m);
  return {std::sqrt(ss / k), sd / k};
}

CoverageResult coverage_and_length(const std::vector<ParamEstimate>& est, double truth) {
  if (!std::isfinite(truth)) throw ValidationError("coverage needs a finite truth");
  if (est.empty()) throw ValidationError("coverage needs at least one replicate");
  double hit = 0.0, len = 0.0;
  for (const auto& e : est) {
    if (e.q025 <= truth && truth <= e.q975) hit += 1.0;
    len += e.q975 - e.q025;
  }
  const double k = static_cast<double>(est.size());
  return {100.0 * hit / k, len / k};
}

double type_s_rate(const std::vector<ParamEstimate>& est, double truth) {
  if (truth != 0.0) throw ValidationError("Type-S rate is defined only for a zero true value");
  if (est.empty()) throw ValidationError("Type-S rate needs at least one replicate");
  double out = 0.0;
  for (const auto& e : est)
    if (e.q025 > 0.0 || e.q975 < 0.0) out += 1.0;
  return 100.0 * out / static_cast<double>(est.size());
}

BiasResult marb_mrrmse(const std::vector<ParamEstimate>& est, double truth, MarbVariant v) {
  if (truth == 0.0 || !std::isfinite(truth)) throw ValidationError("relative bias needs a finite nonzero truth");
  if (est.empty()) throw ValidationError("relative bias needs at least one replicate");
  double sum = 0.0, sum_abs = 0.0, sum_sq = 0.0;
  for (const auto& e : est) {
    const double rb = (e.mean - truth) / truth;
    sum += rb;
    sum_abs += std::abs(rb);
    sum_sq += rb * rb;
  }
  const double k = static_cast<double>(est.size());
  return {v == MarbVariant::AbsOfMean ? std::abs(sum / k) : sum_abs / k, std::sqrt(sum_sq / k)};
}

BiasResult risk_marb_mrrmse(const std::vector<Eigen::VectorXd>& risks, const Eigen::VectorXd& r_true,
                            MarbVariant v) {
  if (risks.empty()) throw ValidationError("risk bias needs at least one replicate");
  const Eigen::Index n = r_true.size();
  BiasResult out;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<ParamEstimate> est;
    for (const auto& r : risks) {
      if (r.size() != n) throw ValidationError("risk vector length mismatch");
      est.push_back({r(i), 0.0, 0.0, 0.0});
    }
    const BiasResult b = marb_mrrmse(est, r_true(i), v);
    out.marb += b.marb;
    out.mrrmse += b.mrrmse;
  }
  out.marb /= static_cast<double>(n);
  out.mrrmse /= static_cast<double>(n);
  return out;
}

double StudySummary::value(const std::string& scenario, const std::string& subscenario, const std::string& model,
                           const std::string& metric) const {
  for (const auto& r : rows)
    if (r.scenario == scenario && r.subscenario == subscenario && r.model == model && r.metric == metric)
      return r.value;
  throw ValidationError("summary has no row " + scenario + "/" + subscenario + "/" + model + "/" + metric);
}

bool StudySummary::has(const std::string& scenario, const std::string& subscenario, const std::string& model,
                       const std::string& metric) const {
  return std::any_of(rows.begin(), rows.end(), [&](const SummaryRow& r) {
    return r.scenario == scenario && r.subscenario == subscenario && r.model == model && r.metric == metric;
  });
}

StudySummary summarize_records(std::vector<ReplicateRecord> records, const std::map<std::string, double>& truth,
                               const Eigen::VectorXd& r_true, const std::string& scenario,
                               const std::string& subscenario, MarbVariant v, int n_failed) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return a.model != b.model ? a.model < b.model : a.replicate < b.replicate;
  });
  StudySummary s;
  auto emit = [&](const std::string& model, const std::string& metric, double value) {
    s.rows.push_back({scenario, subscenario, model, metric, value});
  };
  std::vector<std::string> models;
  for (const auto& r : records)
    if (models.empty() || models.back() != r.model) models.push_back(r.model);

  for (const auto& model : models) {
    std::vector<const ReplicateRecord*> recs;
    for (const auto& r : records)
      if (r.model == model) recs.push_back(&r);
    emit(model, "replicates", static_cast<double>(recs.size()));
    double nonconv = 0.0;
    for (const auto* r : recs) nonconv += r->converged ? 0.0 : 1.0;
    emit(model, "nonconverged", nonconv);
    for (const auto& [param, t] : truth) {
      std::vector<ParamEstimate> est;
      for (const auto* r : recs) {
        const auto it = r->params.find(param);
        if (it != r->params.end()) est.push_back(it->second);
      }
      if (est.empty()) continue;
      double m = 0.0;
      for (const auto& e : est) m += e.mean;
      emit(model, param + ".mean", m / static_cast<double>(est.size()));
      if (est.size() >= 2) {
        const SeResult se = se_sim_and_est(est);
        emit(model, param + ".se_sim", se.se_sim);
        emit(model, param + ".se_est", se.se_est);
      }
      const CoverageResult cov = coverage_and_length(est, t);
      emit(model, param + ".coverage95", cov.coverage);
      emit(model, param + ".ci_length", cov.length);
      if (t == 0.0) {
        emit(model, param + ".type_s", type_s_rate(est, t));
      } else {
        const BiasResult b = marb_mrrmse(est, t, v);
        emit(model, param + ".marb", b.marb);
        emit(model, param + ".mrrmse", b.mrrmse);
      }
    }
    double w = 0.0;
    for (const auto* r : recs) w += r->waic;
    emit(model, "waic", w / static_cast<double>(recs.size()));
    if (r_true.size() > 0) {
      std::vector<Eigen::VectorXd> risks;
      for (const auto* r : recs)
        if (r->risk.size() == r_true.size()) risks.push_back(r->risk);
      if (!risks.empty()) {
        const BiasResult b = risk_marb_mrrmse(risks, r_true, v);
        emit(model, "risk.marb", b.marb);
        emit(model, "risk.mrrmse", b.mrrmse);
      }
    }
  }
  s.rows.push_back({scenario, subscenario, "all", "failed", static_cast<double>(n_failed)});
  return s;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_summary_csv(std::ostream& out, const StudySummary& s, bool header) {
  if (header) out << "scenario,subscenario,model,metric,value\n";
  for (const auto& r : s.rows) {
    out << r.scenario << ',' << r.subscenario << ',' << r.model << ',' << r.metric << ',' << format_double(r.value)
        << '\n';
  }
}

StudySummary read_summary_csv(std::istream& in) {
  StudySummary s;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line.rfind("scenario,", 0) == 0)) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw ParseError("expected 5 columns", lineno);
    SummaryRow r{f[0], f[1], f[2], f[3], 0.0};
    try {
      std::size_t pos = 0;
      r.value = std::stod(f[4], &pos);
      if (pos != f[4].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("non-numeric value '" + f[4] + "'", lineno);
    }
    s.rows.push_back(std::move(r));
  }
  return s;
}

}  // namespace spconf
