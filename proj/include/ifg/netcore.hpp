#pragma once

// Minimal differentiable building blocks. Every forward has an explicit
// backward that accumulates parameter gradients into the owning ParamStore
// and returns the gradient with respect to its input. 64-bit throughout.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ifg::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using Rng = std::mt19937_64;

struct Param {
  Matrix value;
  Matrix grad;
};

/// Named parameters with paired same-shaped gradient buffers. Iteration is in
/// name order; references stay valid for the store's lifetime (including moves).
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  /// Zero-initialized; throws if the name is taken.
  Param& add(const std::string& name, Index rows, Index cols);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Param> params_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Matrix& w, Rng& rng);

// x: batch x in, w: in x out, b: 1 x out.
Matrix dense_forward(const Matrix& x, const Matrix& w, const Matrix& b);
/// Accumulates into dw/db, returns dL/dx.
Matrix dense_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw, Matrix& db);

Matrix relu(const Matrix& x);
/// `y` is the ReLU output; the kink at 0 gets zero gradient.
Matrix relu_backward(const Matrix& y, const Matrix& dy);

/// Columnwise max over row segments [offsets[s], offsets[s+1]). Empty segments
/// produce zeros and route no gradient. Ties go to the lowest row.
struct SegmentMax {
  Matrix values;
  std::vector<Index> argmax;  // segments x cols, row index or -1
};
SegmentMax segment_max(const Matrix& x, std::span<const std::size_t> offsets);
Matrix segment_max_backward(const SegmentMax& pooled, const Matrix& dout, Index input_rows);

class Dense {
 public:
  Dense() = default;
  Dense(ParamStore& store, const std::string& name, Index in, Index out, Rng& rng);

  Matrix forward(const Matrix& x) const;
  Matrix backward(const Matrix& x, const Matrix& dy);

  Index in_dim() const { return w_->value.rows(); }
  Index out_dim() const { return w_->value.cols(); }
  Param& weight() { return *w_; }
  Param& bias() { return *b_; }

 private:
  Param* w_ = nullptr;
  Param* b_ = nullptr;
};

/// Dense stack with ReLU after every layer except (optionally) the last.
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> inputs;  // input of each layer
    std::vector<Matrix> outputs;  // post-activation output of each layer
  };

  Mlp() = default;
  Mlp(ParamStore& store, const std::string& prefix, const std::vector<Index>& widths, bool relu_last, Rng& rng);

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Cache& cache, const Matrix& dy);

  Index in_dim() const { return layers_.front().in_dim(); }
  Index out_dim() const { return layers_.back().out_dim(); }
  std::vector<Dense>& layers() { return layers_; }

 private:
  std::vector<Dense> layers_;
  bool relu_last_ = false;
};

/// v / |v|; throws std::domain_error when |v| <= 1e-12.
Vector l2_normalize(const Vector& v);
/// Gradient through normalization: (dy - y (y . dy)) / |v|.
Vector l2_normalize_backward(const Vector& v, const Vector& dy);

// ---------------------------------------------------------------------------
// Finite-difference verification

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error, so exact zeros compare sanely.
  double abs_floor = 1e-6;
  /// 0 checks every entry; otherwise a seeded random subset per tensor.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
  std::size_t report_worst = 5;
};

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<GradCheckEntry> worst;  // descending rel_error
  bool passed = true;

  std::string summary() const;
};

/// Compares each parameter's grad buffer (filled by the caller's analytic
/// pass) with central differences of `loss`.
GradCheckReport grad_check(const std::function<double()>& loss, ParamStore& params,
                           const GradCheckOptions& opts = {});

/// Same check for a free input vector `x` with analytic gradient `analytic`.
GradCheckReport grad_check(const std::function<double(std::span<const double>)>& loss, std::span<double> x,
                           std::span<const double> analytic, const GradCheckOptions& opts = {},
                           const std::string& name = "x");

// ---------------------------------------------------------------------------
// Optimization

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void step(ParamStore& params);
  long steps() const { return t_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  AdamConfig cfg_;
  std::map<std::string, Moments> moments_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints: little-endian "IFGK", u32 version, u32 count, then per tensor
// u32 name length, name bytes, u32 rank, u32 dims, float64 payload.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
std::map<std::string, Matrix> read_checkpoint(const std::filesystem::path& path);
/// Loads values into an existing store; names and shapes must match exactly.
void load_checkpoint(const std::filesystem::path& path, ParamStore& params);

}  // namespace ifg::nn
