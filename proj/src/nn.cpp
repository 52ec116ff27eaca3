#include "drsl/nn.hpp"

#include <algorithm>
#include <cmath>

namespace drsl::nn {

std::size_t ParamStore::add(const std::string& name, std::vector<int> shape) {
  if (contains(name)) throw ConfigError("duplicate parameter name " + name);
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  params_.push_back(Param{name, std::move(shape), AlignedVector(n, 0.0), AlignedVector(n, 0.0)});
  index_[name] = params_.size() - 1;
  return params_.size() - 1;
}

Param& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return params_[it->second];
}

std::size_t ParamStore::total_numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

bool ParamStore::all_finite() const {
  for (const auto& p : params_)
    for (double v : p.value)
      if (!std::isfinite(v)) return false;
  return true;
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, const ConvSpec& spec) : spec_(spec) {
  weight_ = store.add(name + ".weight", {spec.out_channels, spec.in_channels, spec.kernel, spec.kernel});
  bias_ = store.add(name + ".bias", {spec.out_channels});
}

void Conv2d::init(ParamStore& store, Rng& rng) const {
  auto& w = store[weight_].value;
  const double std = std::sqrt(2.0 / (spec_.in_channels * spec_.kernel * spec_.kernel));
  for (double& v : w) v = std * rng.normal();
  std::fill(store[bias_].value.begin(), store[bias_].value.end(), 0.0);
}

namespace {

// Column row r = (ci, ky, kx); column col = (oy, ox).
void im2col(const Tensor& x, const ConvSpec& s, int out_h, int out_w, RowMatrix& cols) {
  const int k = s.kernel;
  cols.resize(static_cast<Eigen::Index>(s.in_channels) * k * k, static_cast<Eigen::Index>(out_h) * out_w);
  for (int ci = 0; ci < s.in_channels; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols.row((ci * k + ky) * k + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * s.stride - s.padding + ky * s.dilation;
          double* dst = row + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= x.height) {
            std::fill(dst, dst + out_w, 0.0);
            continue;
          }
          const double* src = x.data.data() + (static_cast<std::size_t>(ci) * x.height + iy) * x.width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * s.stride - s.padding + kx * s.dilation;
            dst[ox] = (ix >= 0 && ix < x.width) ? src[ix] : 0.0;
          }
        }
      }
}

void col2im(const RowMatrix& cols, const ConvSpec& s, int out_h, int out_w, Tensor& dx) {
  const int k = s.kernel;
  for (int ci = 0; ci < s.in_channels; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols.row((ci * k + ky) * k + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * s.stride - s.padding + ky * s.dilation;
          if (iy < 0 || iy >= dx.height) continue;
          double* dst = dx.data.data() + (static_cast<std::size_t>(ci) * dx.height + iy) * dx.width;
          const double* src = row + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * s.stride - s.padding + kx * s.dilation;
            if (ix >= 0 && ix < dx.width) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

Tensor Conv2d::forward(const ParamStore& store, const Tensor& x, ConvCache* cache) const {
  require_shape(x.channels == spec_.in_channels, "conv input channel mismatch");
  const int oh = out_size(x.height), ow = out_size(x.width);
  require_shape(oh > 0 && ow > 0, "conv output would be empty");
  RowMatrix local;
  RowMatrix& cols = cache ? cache->columns : local;
  im2col(x, spec_, oh, ow, cols);
  if (cache) {
    cache->in_height = x.height;
    cache->in_width = x.width;
  }
  const Eigen::Map<const RowMatrix> w(store[weight_].value.data(), spec_.out_channels, cols.rows());
  const Eigen::Map<const Eigen::VectorXd> b(store[bias_].value.data(), spec_.out_channels);
  Tensor y(spec_.out_channels, oh, ow);
  Eigen::Map<RowMatrix> out(y.data.data(), spec_.out_channels, cols.cols());
  out.noalias() = w * cols;
  out.colwise() += b;
  return y;
}

Tensor Conv2d::backward(ParamStore& store, const ConvCache& cache, const Tensor& dy,
                        bool need_input_grad) const {
  const RowMatrix& cols = cache.columns;
  require_shape(dy.channels == spec_.out_channels &&
                    static_cast<Eigen::Index>(dy.plane_size()) == cols.cols(),
                "conv backward shape mismatch");
  const Eigen::Map<const RowMatrix> g(dy.data.data(), spec_.out_channels, cols.cols());
  Eigen::Map<RowMatrix> dw(store[weight_].grad.data(), spec_.out_channels, cols.rows());
  Eigen::Map<Eigen::VectorXd> db(store[bias_].grad.data(), spec_.out_channels);
  dw.noalias() += g * cols.transpose();
  db += g.rowwise().sum();
  if (!need_input_grad) return {};
  const Eigen::Map<const RowMatrix> w(store[weight_].value.data(), spec_.out_channels, cols.rows());
  RowMatrix dcols = w.transpose() * g;
  Tensor dx(spec_.in_channels, cache.in_height, cache.in_width);
  col2im(dcols, spec_, dy.height, dy.width, dx);
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = v > 0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i)
    if (!(y.data[i] > 0)) dx.data[i] = 0.0;
  return dx;
}

namespace {

struct Axis {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

Axis axis_table(int in, int out) {
  Axis a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.frac.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    a.lo[o] = lo;
    a.hi[o] = std::min(lo + 1, in - 1);
    a.frac[o] = src - lo;
  }
  return a;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  if (x.height == out_h && x.width == out_w) return x;
  const Axis ay = axis_table(x.height, out_h), ax = axis_table(x.width, out_w);
  Tensor y(x.channels, out_h, out_w);
  for (int c = 0; c < x.channels; ++c)
    for (int oy = 0; oy < out_h; ++oy) {
      const double fy = ay.frac[oy];
      for (int ox = 0; ox < out_w; ++ox) {
        const double fx = ax.frac[ox];
        const double top = (1 - fx) * x(c, ay.lo[oy], ax.lo[ox]) + fx * x(c, ay.lo[oy], ax.hi[ox]);
        const double bot = (1 - fx) * x(c, ay.hi[oy], ax.lo[ox]) + fx * x(c, ay.hi[oy], ax.hi[ox]);
        y(c, oy, ox) = (1 - fy) * top + fy * bot;
      }
    }
  return y;
}

Tensor resize_bilinear_backward(const Tensor& dy, int in_h, int in_w) {
  if (dy.height == in_h && dy.width == in_w) return dy;
  const Axis ay = axis_table(in_h, dy.height), ax = axis_table(in_w, dy.width);
  Tensor dx(dy.channels, in_h, in_w);
  for (int c = 0; c < dy.channels; ++c)
    for (int oy = 0; oy < dy.height; ++oy) {
      const double fy = ay.frac[oy];
      for (int ox = 0; ox < dy.width; ++ox) {
        const double fx = ax.frac[ox];
        const double g = dy(c, oy, ox);
        dx(c, ay.lo[oy], ax.lo[ox]) += (1 - fy) * (1 - fx) * g;
        dx(c, ay.lo[oy], ax.hi[ox]) += (1 - fy) * fx * g;
        dx(c, ay.hi[oy], ax.lo[ox]) += fy * (1 - fx) * g;
        dx(c, ay.hi[oy], ax.hi[ox]) += fy * fx * g;
      }
    }
  return dx;
}

Tensor softmax_channels(const Tensor& logits) {
  Tensor p(logits.channels, logits.height, logits.width);
  const std::size_t n = logits.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits.data[i];
    for (int c = 1; c < logits.channels; ++c) mx = std::max(mx, logits.data[c * n + i]);
    double sum = 0;
    for (int c = 0; c < logits.channels; ++c) {
      const double e = std::exp(logits.data[c * n + i] - mx);
      p.data[c * n + i] = e;
      sum += e;
    }
    for (int c = 0; c < logits.channels; ++c) p.data[c * n + i] /= sum;
  }
  return p;
}

}  // namespace drsl::nn
