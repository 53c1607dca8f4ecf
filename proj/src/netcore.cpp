#include "ifg/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ifg::nn {

Param& ParamStore::add(const std::string& name, Index rows, Index cols) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("parameter '" + name + "' needs positive shape");
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw std::invalid_argument("duplicate parameter '" + name + "'");
  it->second.value = Matrix::Zero(rows, cols);
  it->second.grad = Matrix::Zero(rows, cols);
  return it->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.setZero();
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void glorot_uniform(Matrix& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
}

Matrix dense_forward(const Matrix& x, const Matrix& w, const Matrix& b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    std::ostringstream os;
    os << "dense: shape mismatch (x " << x.rows() << "x" << x.cols() << ", w " << w.rows() << "x" << w.cols()
       << ", b " << b.rows() << "x" << b.cols() << ")";
    throw std::invalid_argument(os.str());
  }
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

Matrix dense_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw, Matrix& db) {
  if (dy.rows() != x.rows() || dy.cols() != w.cols() || dw.rows() != w.rows() || dw.cols() != w.cols() ||
      db.cols() != w.cols()) {
    throw std::invalid_argument("dense backward: shape mismatch");
  }
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
  return dy * w.transpose();
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& y, const Matrix& dy) {
  return (y.array() > 0.0).select(dy, Matrix::Zero(dy.rows(), dy.cols()));
}

SegmentMax segment_max(const Matrix& x, std::span<const std::size_t> offsets) {
  if (offsets.empty()) throw std::invalid_argument("segment_max: offsets must hold at least one entry");
  const auto segments = static_cast<Index>(offsets.size() - 1);
  SegmentMax out{Matrix::Zero(segments, x.cols()), std::vector<Index>(segments * x.cols(), -1)};
  for (Index s = 0; s < segments; ++s) {
    const auto begin = static_cast<Index>(offsets[s]);
    const auto end = static_cast<Index>(offsets[s + 1]);
    if (end > x.rows() || begin > end) throw std::invalid_argument("segment_max: bad offsets");
    if (begin == end) continue;
    for (Index c = 0; c < x.cols(); ++c) {
      Index best = begin;
      for (Index r = begin + 1; r < end; ++r) {
        if (x(r, c) > x(best, c)) best = r;
      }
      out.values(s, c) = x(best, c);
      out.argmax[s * x.cols() + c] = best;
    }
  }
  return out;
}

Matrix segment_max_backward(const SegmentMax& pooled, const Matrix& dout, Index input_rows) {
  Matrix dx = Matrix::Zero(input_rows, dout.cols());
  for (Index s = 0; s < dout.rows(); ++s) {
    for (Index c = 0; c < dout.cols(); ++c) {
      const Index r = pooled.argmax[s * dout.cols() + c];
      if (r >= 0) dx(r, c) += dout(s, c);
    }
  }
  return dx;
}

Dense::Dense(ParamStore& store, const std::string& name, Index in, Index out, Rng& rng) {
  w_ = &store.add(name + ".w", in, out);
  b_ = &store.add(name + ".b", 1, out);
  glorot_uniform(w_->value, rng);
}

Matrix Dense::forward(const Matrix& x) const { return dense_forward(x, w_->value, b_->value); }

Matrix Dense::backward(const Matrix& x, const Matrix& dy) {
  return dense_backward(x, w_->value, dy, w_->grad, b_->grad);
}

Mlp::Mlp(ParamStore& store, const std::string& prefix, const std::vector<Index>& widths, bool relu_last, Rng& rng)
    : relu_last_(relu_last) {
  if (widths.size() < 2) throw std::invalid_argument("mlp needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers_.emplace_back(store, prefix + "." + std::to_string(i), widths[i], widths[i + 1], rng);
  }
}

Matrix Mlp::forward(const Matrix& x, Cache* cache) const {
  if (cache) {
    cache->inputs.clear();
    cache->outputs.clear();
  }
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix y = layers_[i].forward(h);
    if (i + 1 < layers_.size() || relu_last_) y = relu(y);
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->outputs.push_back(y);
    }
    h = std::move(y);
  }
  return h;
}

Matrix Mlp::backward(const Cache& cache, const Matrix& dy) {
  Matrix g = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (i + 1 < layers_.size() || relu_last_) g = relu_backward(cache.outputs[i], g);
    g = layers_[i].backward(cache.inputs[i], g);
  }
  return g;
}

Vector l2_normalize(const Vector& v) {
  const double n = v.norm();
  if (!(n > 1e-12)) throw std::domain_error("l2_normalize: near-zero vector");
  return v / n;
}

Vector l2_normalize_backward(const Vector& v, const Vector& dy) {
  const double n = v.norm();
  if (!(n > 1e-12)) throw std::domain_error("l2_normalize: near-zero vector");
  const Vector y = v / n;
  return (dy - y * y.dot(dy)) / n;
}

// ---------------------------------------------------------------------------

namespace {

struct Checker {
  const GradCheckOptions& opts;
  GradCheckReport report;

  void record(const std::string& name, std::size_t index, double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.abs_floor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.checked;
    if (!std::isfinite(rel) || rel > report.max_rel_error) report.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
    report.worst.push_back({name, index, analytic, numeric, rel});
    std::sort(report.worst.begin(), report.worst.end(),
              [](const auto& a, const auto& b) { return a.rel_error > b.rel_error; });
    if (report.worst.size() > opts.report_worst) report.worst.resize(opts.report_worst);
  }

  std::vector<std::size_t> entries(std::size_t n, Rng& rng) const {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (opts.max_entries_per_tensor != 0 && n > opts.max_entries_per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.max_entries_per_tensor);
      std::sort(idx.begin(), idx.end());
    }
    return idx;
  }

  GradCheckReport finish() {
    report.passed = std::isfinite(report.max_rel_error) && report.max_rel_error < opts.tolerance;
    return report;
  }
};

}  // namespace

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "ok" : "FAIL") << " checked=" << checked << " max_rel_error=" << max_rel_error;
  for (const auto& e : worst) {
    os << "\n  " << e.name << "[" << e.index << "] analytic=" << e.analytic << " numeric=" << e.numeric
       << " rel=" << e.rel_error;
  }
  return os.str();
}

GradCheckReport grad_check(const std::function<double()>& loss, ParamStore& params, const GradCheckOptions& opts) {
  Checker chk{opts, {}};
  Rng rng(opts.seed);
  for (auto& [name, p] : params) {
    const Matrix analytic = p.grad;
    for (const auto i : chk.entries(static_cast<std::size_t>(p.value.size()), rng)) {
      double& v = p.value.data()[i];
      const double saved = v;
      v = saved + opts.step;
      const double up = loss();
      v = saved - opts.step;
      const double down = loss();
      v = saved;
      chk.record(name, i, analytic.data()[i], (up - down) / (2.0 * opts.step));
    }
  }
  return chk.finish();
}

GradCheckReport grad_check(const std::function<double(std::span<const double>)>& loss, std::span<double> x,
                           std::span<const double> analytic, const GradCheckOptions& opts, const std::string& name) {
  if (x.size() != analytic.size()) throw std::invalid_argument("grad_check: gradient size mismatch");
  Checker chk{opts, {}};
  Rng rng(opts.seed);
  for (const auto i : chk.entries(x.size(), rng)) {
    const double saved = x[i];
    x[i] = saved + opts.step;
    const double up = loss(x);
    x[i] = saved - opts.step;
    const double down = loss(x);
    x[i] = saved;
    chk.record(name, i, analytic[i], (up - down) / (2.0 * opts.step));
  }
  return chk.finish();
}

void Adam::step(ParamStore& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto [it, inserted] = moments_.try_emplace(name);
    if (inserted) {
      it->second.m = Matrix::Zero(p.value.rows(), p.value.cols());
      it->second.v = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    auto& mom = it->second;
    mom.m = cfg_.beta1 * mom.m + (1.0 - cfg_.beta1) * p.grad;
    mom.v = cfg_.beta2 * mom.v + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= cfg_.lr * (mom.m.array() / c1) / ((mom.v.array() / c2).sqrt() + cfg_.eps);
  }
}

}  // namespace ifg::nn
