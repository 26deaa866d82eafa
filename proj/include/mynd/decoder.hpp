#pragma once

// Transfer-learning decoder.
//
// Per-task linear regression on ±1 labels, regularized towards a Gaussian
// prior N(mean, covariance) over the weights:
//
//   w = argmin ||y - Xw||² + λ (w - mean)ᵀ covariance⁻¹ (w - mean)
//
// The prior is learned on a set of lab tasks by alternating between the
// per-task MAP weights (prior fixed) and a closed-form prior update
// (weights fixed): the mean becomes the average weight vector and the
// covariance the trace-normalized square root of the weight scatter,
// i.e. the convex multi-task feature-learning step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mynd/bytes.hpp"
#include "mynd/common.hpp"
#include "mynd/features.hpp"
#include "mynd/stats.hpp"

namespace mynd::decoder {

inline constexpr std::size_t kModelDim = features::kFeatureCount + 1; // features + bias
inline constexpr double kRidgeEpsilon = 1e-6;
inline constexpr int kDefaultIterations = 10000;
inline constexpr double kConvergenceTolerance = 1e-8;
inline const std::vector<double> kDefaultLambdaGrid{1e-2, 1e-1, 1.0, 10.0, 100.0};

class SingularSystem : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct GaussianPrior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  static GaussianPrior uninformative(std::size_t dim = kModelDim) {
    const auto d = static_cast<Eigen::Index>(dim);
    return {Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d)};
  }
  Eigen::Index dim() const { return mean.size(); }
};

struct LinearModel {
  Eigen::VectorXd weights;

  double score(const Eigen::Ref<const Eigen::VectorXd>& x) const { return x.dot(weights); }
};

/// Trials of one (subject, day, strategy): rows of X are [features, 1].
struct TaskDataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::string subject;
  std::string strategy;
  int day = 0;

  Eigen::Index trials() const { return X.rows(); }
  bool has_both_labels() const { return (y.array() > 0).any() && (y.array() < 0).any(); }
};

/// Stacks feature vectors into a task and appends the constant bias column.
inline TaskDataset make_task(std::span<const features::FeatureVector> vectors) {
  TaskDataset t;
  const auto n = static_cast<Eigen::Index>(vectors.size());
  t.X.resize(n, static_cast<Eigen::Index>(kModelDim));
  t.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& v = vectors[static_cast<std::size_t>(i)];
    for (std::size_t f = 0; f < features::kFeatureCount; ++f) t.X(i, static_cast<Eigen::Index>(f)) = v.values[f];
    t.X(i, static_cast<Eigen::Index>(features::kFeatureCount)) = 1.0;
    t.y[i] = v.label;
  }
  if (!vectors.empty()) {
    t.subject = vectors.front().subject;
    t.strategy = vectors.front().strategy;
    t.day = vectors.front().day;
  }
  return t;
}

/// Prior in information form: precision = covariance⁻¹ and precision·mean.
struct PriorPrecision {
  Eigen::MatrixXd precision;
  Eigen::VectorXd shift;

  explicit PriorPrecision(const GaussianPrior& prior) {
    if (prior.covariance.rows() != prior.dim() || prior.covariance.cols() != prior.dim())
      throw ContractError("GaussianPrior: covariance/mean dimension mismatch");
    Eigen::LLT<Eigen::MatrixXd> llt(prior.covariance);
    if (llt.info() != Eigen::Success) throw SingularSystem("GaussianPrior: covariance is not positive definite");
    precision = llt.solve(Eigen::MatrixXd::Identity(prior.dim(), prior.dim()));
    precision = 0.5 * (precision + precision.transpose());
    shift = precision * prior.mean;
  }
};

namespace detail {

// Solves (gram + λP) w = xty + λPμ.
inline Eigen::VectorXd solve_map(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xty, const PriorPrecision& pp,
                                 double lambda) {
  Eigen::MatrixXd a = gram;
  Eigen::VectorXd b = xty;
  if (lambda > 0.0) {
    a.noalias() += lambda * pp.precision;
    b.noalias() += lambda * pp.shift;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) return llt.solve(b);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-12);
  if (qr.rank() < a.rows()) throw SingularSystem("fit_map: normal equations are singular");
  return qr.solve(b);
}

} // namespace detail

inline LinearModel fit_map(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const PriorPrecision& pp,
                           double lambda) {
  if (X.rows() != y.size()) throw ContractError("fit_map: X/y row mismatch");
  if (X.cols() != pp.precision.rows()) throw ContractError("fit_map: prior dimension mismatch");
  if (!(lambda >= 0.0)) throw ContractError("fit_map: lambda must be >= 0");
  const Eigen::MatrixXd gram = X.transpose() * X;
  const Eigen::VectorXd xty = X.transpose() * y;
  return {detail::solve_map(gram, xty, pp, lambda)};
}

inline LinearModel fit_map(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GaussianPrior& prior,
                           double lambda) {
  return fit_map(X, y, PriorPrecision(prior), lambda);
}

struct LearnPriorOptions {
  int max_iterations = kDefaultIterations;
  double lambda = 1.0;
  double tolerance = kConvergenceTolerance; // on ||ΔΣ||_F
  double ridge_epsilon = kRidgeEpsilon;
  bool zero_mean = false; // keep the prior mean at 0 (covariance-only prior)
};

struct PriorFit {
  GaussianPrior prior;
  int iterations = 0;
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  int clipped_eigenvalue_iterations = 0; // iterations where a negative eigenvalue of M was clipped
  std::vector<std::string> diagnostics;
};

/// Learns the Gaussian prior over lab tasks by alternating minimization.
inline PriorFit learn_prior(std::span<const TaskDataset> tasks, const LearnPriorOptions& opt = {}) {
  if (tasks.size() < 2) throw ContractError("learn_prior: at least 2 lab tasks are required");
  const Eigen::Index d = tasks.front().X.cols();
  std::vector<Eigen::MatrixXd> grams;
  std::vector<Eigen::VectorXd> xtys;
  for (const auto& t : tasks) {
    if (t.X.cols() != d) throw ContractError("learn_prior: tasks disagree on dimension");
    if (t.trials() < 2) throw ContractError("learn_prior: every task needs at least 2 trials");
    grams.push_back(t.X.transpose() * t.X);
    xtys.push_back(t.X.transpose() * t.y);
  }
  const auto m = static_cast<double>(tasks.size());
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);

  PriorFit fit;
  fit.prior = GaussianPrior::uninformative(static_cast<std::size_t>(d));
  std::vector<Eigen::VectorXd> w(tasks.size());
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const PriorPrecision pp(fit.prior);
    for (std::size_t s = 0; s < tasks.size(); ++s) w[s] = detail::solve_map(grams[s], xtys[s], pp, opt.lambda);

    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    if (!opt.zero_mean) {
      for (const auto& ws : w) mu += ws;
      mu /= m;
    }
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
    for (const auto& ws : w) {
      const Eigen::VectorXd c = ws - mu;
      scatter.noalias() += c * c.transpose();
    }
    scatter /= m;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (scatter + scatter.transpose()));
    Eigen::VectorXd ev = eig.eigenvalues();
    const double max_ev = std::max(ev.maxCoeff(), 0.0);
    if (ev.minCoeff() < -1e-12 * std::max(max_ev, 1e-300)) ++fit.clipped_eigenvalue_iterations;
    ev = ev.cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd root = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
    root = 0.5 * (root + root.transpose());
    const double tr = root.trace();
    double scale = 0.0;
    for (const auto& ws : w) scale = std::max(scale, ws.norm());

    Eigen::MatrixXd cov;
    // Spread at rounding level relative to the weights counts as none.
    if (tr > 1e-12 * scale && tr > std::numeric_limits<double>::min() * 1e6) {
      cov = root / tr + opt.ridge_epsilon * eye;
    } else {
      // All task weights coincide: nothing left to spread the prior over.
      cov = opt.ridge_epsilon * eye;
    }

    fit.residual = (cov - fit.prior.covariance).norm();
    fit.prior.mean = mu;
    fit.prior.covariance = cov;
    fit.iterations = it;
    if (fit.residual < opt.tolerance) {
      fit.converged = true;
      break;
    }
  }
  if (fit.clipped_eigenvalue_iterations > 0)
    fit.diagnostics.push_back("negative eigenvalues of the weight scatter were clipped in " +
                              std::to_string(fit.clipped_eigenvalue_iterations) + " iteration(s)");
  return fit;
}

/// +1 / -1 for a strictly signed score, 0 for an exact tie (never correct).
inline int predict_label(double score) { return score > 0.0 ? 1 : (score < 0.0 ? -1 : 0); }

namespace detail {

struct FoldData {
  Eigen::MatrixXd gram;
  Eigen::VectorXd xty;
};

inline FoldData downdate(const FoldData& full, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         std::span<const Eigen::Index> removed) {
  FoldData f = full;
  for (auto i : removed) {
    f.gram.noalias() -= X.row(i).transpose() * X.row(i);
    f.xty.noalias() -= X.row(i).transpose() * y[i];
  }
  return f;
}

// Picks λ by leave-one-out squared error on the training rows; ties go to
// the larger λ.
inline double select_lambda(const FoldData& train, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            std::span<const Eigen::Index> train_rows, const PriorPrecision& pp,
                            std::span<const double> grid) {
  if (grid.size() == 1) return grid.front();
  double best_lambda = grid.front();
  double best_err = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    double err = 0.0;
    for (auto j : train_rows) {
      const Eigen::Index rm[1] = {j};
      const FoldData inner = downdate(train, X, y, rm);
      const Eigen::VectorXd w = solve_map(inner.gram, inner.xty, pp, lambda);
      const double r = y[j] - X.row(j).dot(w);
      err += r * r;
    }
    if (err < best_err || (err == best_err && lambda > best_lambda)) {
      best_err = err;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

} // namespace detail

struct LooResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t trials = 0;
  std::vector<double> chosen_lambda; // per fold
};

/// Leave-one-trial-out accuracy. With more than one λ in `grid`, each fold
/// picks its λ by an inner leave-one-out on its n-1 training trials.
inline LooResult loo_evaluate(const TaskDataset& task, const GaussianPrior& prior, std::span<const double> grid) {
  const Eigen::Index n = task.trials();
  if (n < 2) throw ContractError("loo_accuracy: need at least 2 trials");
  if (!task.has_both_labels()) throw ContractError("loo_accuracy: both labels must be present");
  if (grid.empty()) throw ContractError("loo_accuracy: empty lambda grid");
  const PriorPrecision pp(prior);
  const detail::FoldData full{task.X.transpose() * task.X, task.X.transpose() * task.y};
  LooResult res;
  res.trials = static_cast<std::size_t>(n);
  std::vector<Eigen::Index> train;
  train.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    train.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) train.push_back(j);
    const Eigen::Index rm[1] = {i};
    const detail::FoldData fold = detail::downdate(full, task.X, task.y, rm);
    const double lambda = detail::select_lambda(fold, task.X, task.y, train, pp, grid);
    res.chosen_lambda.push_back(lambda);
    const Eigen::VectorXd w = detail::solve_map(fold.gram, fold.xty, pp, lambda);
    const int predicted = predict_label(task.X.row(i).dot(w));
    const int truth = task.y[i] > 0 ? 1 : -1;
    if (predicted == truth) ++res.correct;
  }
  res.accuracy = static_cast<double>(res.correct) / static_cast<double>(n);
  return res;
}

inline double loo_accuracy(const TaskDataset& task, const GaussianPrior& prior, double lambda) {
  const double grid[1] = {lambda};
  return loo_evaluate(task, prior, grid).accuracy;
}

inline double loo_accuracy(const TaskDataset& task, const GaussianPrior& prior, std::span<const double> grid) {
  return loo_evaluate(task, prior, grid).accuracy;
}

// ---------------------------------------------------------------------------
// Mediator analysis

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct DecodingRow {
  std::string subject;
  int day = 0;
  std::string strategy;
  std::size_t trials = 0;
  double accuracy = 0.0;
  double mean_quality = kMissing;
  double motivation = kMissing; // 1..5
  double meditation = kMissing; // 1..3
};

struct MediatorCorrelation {
  std::string mediator;
  std::optional<stats::Correlation> result;
  std::string error; // set when result is empty
};

struct MediatorReport {
  std::vector<MediatorCorrelation> correlations;
  std::map<std::string, double> strategy_mean;                  // strategy -> mean accuracy
  std::map<std::pair<std::string, int>, double> day_median;     // (strategy, day) -> median accuracy
};

/// Correlates accuracy with signal quality, day, motivation and meditation.
/// Rows missing a mediator value are left out of that mediator's pairs.
inline MediatorReport mediator_report(std::span<const DecodingRow> rows) {
  if (rows.empty()) throw ContractError("mediator_report: empty results table");
  MediatorReport rep;
  auto correlate = [&](const std::string& name, auto value_of) {
    std::vector<double> acc, med;
    for (const auto& r : rows) {
      const double v = value_of(r);
      if (std::isnan(v)) continue;
      acc.push_back(r.accuracy);
      med.push_back(v);
    }
    MediatorCorrelation mc{name, std::nullopt, {}};
    try {
      mc.result = stats::pearson(acc, med);
    } catch (const std::exception& e) {
      mc.error = e.what();
    }
    rep.correlations.push_back(std::move(mc));
  };
  correlate("signal_quality", [](const DecodingRow& r) { return r.mean_quality; });
  correlate("day", [](const DecodingRow& r) { return static_cast<double>(r.day); });
  correlate("motivation", [](const DecodingRow& r) { return r.motivation; });
  correlate("meditation", [](const DecodingRow& r) { return r.meditation; });

  std::map<std::string, std::vector<double>> by_strategy;
  std::map<std::pair<std::string, int>, std::vector<double>> by_day;
  for (const auto& r : rows) {
    by_strategy[r.strategy].push_back(r.accuracy);
    by_day[{r.strategy, r.day}].push_back(r.accuracy);
  }
  for (const auto& [s, v] : by_strategy) rep.strategy_mean[s] = stats::mean(v);
  for (const auto& [k, v] : by_day) rep.day_median[k] = stats::median(v);
  return rep;
}

inline void write_results_table(std::ostream& os, std::span<const DecodingRow> rows) {
  os << "subject,day,strategy,trials,accuracy,mean_quality,motivation,meditation\n";
  const auto prec = os.precision(10);
  for (const auto& r : rows) {
    os << r.subject << ',' << r.day << ',' << r.strategy << ',' << r.trials << ',' << r.accuracy << ',';
    auto opt = [&](double v) {
      if (!std::isnan(v)) os << v;
    };
    opt(r.mean_quality);
    os << ',';
    opt(r.motivation);
    os << ',';
    opt(r.meditation);
    os << '\n';
  }
  os.precision(prec);
}

inline void write_mediator_table(std::ostream& os, const MediatorReport& rep) {
  os << "mediator,n,r,p,error\n";
  const auto prec = os.precision(10);
  for (const auto& c : rep.correlations) {
    os << c.mediator << ',';
    if (c.result)
      os << c.result->n << ',' << c.result->r << ',' << c.result->p << ',';
    else
      os << ",,," << '"' << c.error << '"';
    os << '\n';
  }
  os.precision(prec);
}

// ---------------------------------------------------------------------------
// Prior file (binary, little-endian):
//
//   offset  size   field
//   0       8      magic "MYNDPRIR"
//   8       2      version (1)
//   10      2      reserved (0)
//   12      4      dim D
//   16      4      lambda-grid length L
//   20      4      feature-name block length N (bytes)
//   24      4      iterations run
//   28      8      final residual ||ΔΣ||_F (f64)
//   36      8      λ used while learning (f64)
//   44      8L     λ grid (f64)
//   ...     N      feature names, '\n'-terminated, D entries (last is "bias")
//   ...     8D     mean (f64)
//   ...     8D²    covariance, row-major (f64)

inline constexpr std::string_view kPriorMagic = "MYNDPRIR";
inline constexpr std::uint16_t kPriorVersion = 1;

class PriorFormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct PriorFile {
  GaussianPrior prior;
  std::vector<double> lambda_grid = kDefaultLambdaGrid;
  double learn_lambda = 1.0;
  std::uint32_t iterations = 0;
  double residual = 0.0;
  std::vector<std::string> feature_names;
};

inline std::vector<std::string> default_feature_names() {
  std::vector<std::string> names;
  for (std::size_t f = 0; f < features::kFeatureCount; ++f) names.push_back(features::feature_name(f));
  names.emplace_back("bias");
  return names;
}

inline Bytes encode_prior(const PriorFile& pf) {
  const auto d = pf.prior.dim();
  if (pf.prior.covariance.rows() != d || pf.prior.covariance.cols() != d)
    throw ContractError("encode_prior: dimension mismatch");
  if (pf.feature_names.size() != static_cast<std::size_t>(d))
    throw ContractError("encode_prior: need one feature name per dimension");
  std::string names;
  for (const auto& n : pf.feature_names) {
    if (n.find('\n') != std::string::npos) throw ContractError("encode_prior: newline in feature name");
    names += n;
    names += '\n';
  }
  ByteWriter w;
  w.raw(kPriorMagic);
  w.u16(kPriorVersion);
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(pf.lambda_grid.size()));
  w.u32(static_cast<std::uint32_t>(names.size()));
  w.u32(pf.iterations);
  w.f64(pf.residual);
  w.f64(pf.learn_lambda);
  for (double l : pf.lambda_grid) w.f64(l);
  w.raw(names);
  for (Eigen::Index i = 0; i < d; ++i) w.f64(pf.prior.mean[i]);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) w.f64(pf.prior.covariance(i, j));
  return w.take();
}

inline PriorFile decode_prior(std::span<const std::uint8_t> bytes) {
  try {
    ByteReader r(bytes);
    if (r.str(kPriorMagic.size()) != kPriorMagic) throw PriorFormatError("prior file: bad magic");
    if (r.u16() != kPriorVersion) throw PriorFormatError("prior file: unsupported version");
    r.u16();
    const auto d = static_cast<Eigen::Index>(r.u32());
    const std::uint32_t nl = r.u32();
    const std::uint32_t nn = r.u32();
    if (d <= 0 || d > 4096 || nl > 4096) throw PriorFormatError("prior file: implausible sizes");
    PriorFile pf;
    pf.iterations = r.u32();
    pf.residual = r.f64();
    pf.learn_lambda = r.f64();
    pf.lambda_grid.resize(nl);
    for (auto& l : pf.lambda_grid) l = r.f64();
    const std::string names = r.str(nn);
    std::size_t start = 0;
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == '\n') {
        pf.feature_names.push_back(names.substr(start, i - start));
        start = i + 1;
      }
    if (start != names.size() || pf.feature_names.size() != static_cast<std::size_t>(d))
      throw PriorFormatError("prior file: feature-name block does not match dimension");
    pf.prior.mean.resize(d);
    pf.prior.covariance.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) pf.prior.mean[i] = r.f64();
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) pf.prior.covariance(i, j) = r.f64();
    if (r.remaining() != 0) throw PriorFormatError("prior file: trailing bytes");
    return pf;
  } catch (const TruncatedInput&) {
    throw PriorFormatError("prior file: truncated");
  }
}

inline void save_prior(const std::string& path, const PriorFile& pf) {
  const Bytes b = encode_prior(pf);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write prior file " + path);
  os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

inline PriorFile load_prior(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read prior file " + path);
  const Bytes b((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_prior(b);
}

} // namespace mynd::decoder
