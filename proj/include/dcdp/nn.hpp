#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dcdp/conv.hpp"
#include "dcdp/ops.hpp"

namespace dcdp {

/// Owns all trainable tensors of a model, in creation order. Creation order
/// is the checkpoint layout, so construction must be deterministic.
template <typename S>
class ParamRegistry {
 public:
  Tensor<S>& create(const std::string& name, Index rows, Index cols) {
    if (by_name_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    tensors_.push_back(std::make_unique<Tensor<S>>(name, rows, cols));
    by_name_[name] = tensors_.back().get();
    return *tensors_.back();
  }

  Tensor<S>* find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }

  const std::vector<std::unique_ptr<Tensor<S>>>& tensors() const { return tensors_; }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& t : tensors_) n += t->value.size();
    return n;
  }

  void zero_grads() {
    for (auto& t : tensors_) t->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Tensor<S>>> tensors_;
  std::unordered_map<std::string, Tensor<S>*> by_name_;
};

enum class Init { Zeros, XavierNormal, XavierUniform };

template <typename S>
void fill_init(Tensor<S>& t, Init init, Rng& rng, Index fan_in, Index fan_out) {
  switch (init) {
    case Init::Zeros:
      t.value.setZero();
      break;
    case Init::XavierNormal: {
      double std = std::sqrt(2.0 / double(fan_in + fan_out));
      for (Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = S(rng.normal() * std);
      break;
    }
    case Init::XavierUniform: {
      double lim = std::sqrt(6.0 / double(fan_in + fan_out));
      for (Index i = 0; i < t.value.size(); ++i)
        t.value.data()[i] = S((rng.uniform() * 2.0 - 1.0) * lim);
      break;
    }
  }
}

template <typename S>
struct Linear {
  Tensor<S>* w = nullptr;
  Tensor<S>* b = nullptr;

  Linear() = default;
  Linear(ParamRegistry<S>& reg, const std::string& prefix, Index in, Index out, Rng& rng,
         Init init = Init::XavierNormal, bool bias = true) {
    w = &reg.create(prefix + "/w", out, in);
    fill_init(*w, init, rng, in, out);
    if (bias) b = &reg.create(prefix + "/b", out, 1);
  }

  Var<S> operator()(Var<S> x) const {
    Var<S> y = matmul(x.tape->param(*w), x);
    return b ? add_colvec(y, x.tape->param(*b)) : y;
  }
};

template <typename S>
struct LayerNorm {
  Tensor<S>* gain = nullptr;
  Tensor<S>* bias = nullptr;
  S eps = S(1e-3);

  LayerNorm() = default;
  LayerNorm(ParamRegistry<S>& reg, const std::string& prefix, Index dim) {
    gain = &reg.create(prefix + "/gain", dim, 1);
    gain->value.setOnes();
    bias = &reg.create(prefix + "/bias", dim, 1);
  }

  Var<S> operator()(Var<S> x) const {
    return layer_norm(x, x.tape->param(*gain), x.tape->param(*bias), eps);
  }
};

/// Linear (no bias) + layer norm + SiLU, the standard hidden block.
template <typename S>
struct DenseBlock {
  Linear<S> lin;
  LayerNorm<S> norm;

  DenseBlock() = default;
  DenseBlock(ParamRegistry<S>& reg, const std::string& prefix, Index in, Index out, Rng& rng)
      : lin(reg, prefix + "/lin", in, out, rng, Init::XavierNormal, false),
        norm(reg, prefix + "/norm", out) {}

  Var<S> operator()(Var<S> x) const { return silu(norm(lin(x))); }
};

/// Hidden DenseBlocks followed by a plain linear output layer.
template <typename S>
struct Mlp {
  std::vector<DenseBlock<S>> hidden;
  Linear<S> out;

  Mlp() = default;
  Mlp(ParamRegistry<S>& reg, const std::string& prefix, Index in, Index hidden_dim,
      int hidden_layers, Index out_dim, Rng& rng, Init out_init = Init::XavierUniform) {
    Index d = in;
    for (int i = 0; i < hidden_layers; ++i) {
      hidden.emplace_back(reg, prefix + "/h" + std::to_string(i), d, hidden_dim, rng);
      d = hidden_dim;
    }
    out = Linear<S>(reg, prefix + "/out", d, out_dim, rng, out_init, true);
  }

  Var<S> operator()(Var<S> x) const {
    for (const auto& h : hidden) x = h(x);
    return out(x);
  }
};

/// DreamerV3-style gated recurrent cell with a normalized input stage and the
/// update gate biased toward keeping state (sigmoid(x - 1)).
template <typename S>
struct GruCell {
  Linear<S> in_z, in_a;
  LayerNorm<S> in_norm;
  Linear<S> gate_pre, gate_h;
  LayerNorm<S> gate_norm;
  Index deter = 0;

  GruCell() = default;
  GruCell(ParamRegistry<S>& reg, const std::string& prefix, Index z_dim, Index a_dim,
          Index hidden_dim, Index deter_dim, Rng& rng)
      : in_z(reg, prefix + "/in_z", z_dim, hidden_dim, rng, Init::XavierNormal, false),
        in_a(reg, prefix + "/in_a", a_dim, hidden_dim, rng, Init::XavierNormal, false),
        in_norm(reg, prefix + "/in_norm", hidden_dim),
        gate_pre(reg, prefix + "/gate_pre", hidden_dim, 3 * deter_dim, rng, Init::XavierNormal, false),
        gate_h(reg, prefix + "/gate_h", deter_dim, 3 * deter_dim, rng, Init::XavierNormal, false),
        gate_norm(reg, prefix + "/gate_norm", 3 * deter_dim),
        deter(deter_dim) {}

  Var<S> step(Var<S> h, Var<S> z, Var<S> a) const {
    Var<S> pre = silu(in_norm(add(in_z(z), in_a(a))));
    Var<S> x = gate_norm(add(gate_pre(pre), gate_h(h)));
    Var<S> reset = sigmoid(rows(x, 0, deter));
    Var<S> cand = tanh_(cmul(reset, rows(x, deter, deter)));
    Var<S> update = sigmoid(add_scalar(rows(x, 2 * deter, deter), S(-1)));
    return add(h, cmul(update, sub(cand, h)));
  }
};

template <typename S>
struct ConvLayer {
  Tensor<S>* w = nullptr;
  Tensor<S>* b = nullptr;
  LayerNorm<S> norm;
  ConvDims dims;
};

/// Strided conv stack halving resolution per layer (kernel 4, stride 2,
/// pad 1), layer norm + SiLU after each, then a linear head to the embedding.
template <typename S>
struct ConvEncoder {
  std::vector<ConvLayer<S>> layers;
  Linear<S> head;
  Index flat_dim = 0;

  ConvEncoder() = default;
  ConvEncoder(ParamRegistry<S>& reg, const std::string& prefix, int image_size, int channels,
              int depth, Index feature_dim, Rng& rng) {
    int size = image_size, cin = channels, cout = depth, i = 0;
    while (size > 4) {
      ConvLayer<S> l;
      l.dims = ConvDims{cin, size, size, cout, 4, 2, 1};
      l.w = &reg.create(prefix + "/conv" + std::to_string(i) + "/w", cout, l.dims.patch());
      fill_init(*l.w, Init::XavierNormal, rng, l.dims.patch(), cout);
      l.b = &reg.create(prefix + "/conv" + std::to_string(i) + "/b", cout, 1);
      size /= 2;
      l.norm = LayerNorm<S>(reg, prefix + "/conv" + std::to_string(i) + "/norm",
                            Index(cout) * size * size);
      layers.push_back(l);
      cin = cout;
      cout *= 2;
      ++i;
    }
    flat_dim = Index(cin) * size * size;
    head = Linear<S>(reg, prefix + "/head", flat_dim, feature_dim, rng, Init::XavierNormal, true);
  }

  Var<S> operator()(Var<S> images) const {
    Var<S> x = images;
    for (const auto& l : layers) {
      Tape<S>& t = *x.tape;
      x = silu(l.norm(conv2d(x, t.param(*l.w), t.param(*l.b), l.dims)));
    }
    return head(x);
  }
};

/// Mirror of ConvEncoder: linear from the latent, then transposed convs
/// doubling resolution, final layer linear in pixel space.
template <typename S>
struct ConvDecoder {
  Linear<S> in;
  std::vector<ConvLayer<S>> layers;  // dims describe the mirrored conv
  Index top_dim = 0;

  ConvDecoder() = default;
  ConvDecoder(ParamRegistry<S>& reg, const std::string& prefix, Index latent_dim, int image_size,
              int channels, int depth, Rng& rng) {
    // Reconstruct the encoder geometry to mirror it.
    std::vector<ConvDims> fw;
    int size = image_size, cin = channels, cout = depth;
    while (size > 4) {
      fw.push_back(ConvDims{cin, size, size, cout, 4, 2, 1});
      size /= 2;
      cin = cout;
      cout *= 2;
    }
    top_dim = Index(cin) * size * size;
    in = Linear<S>(reg, prefix + "/in", latent_dim, top_dim, rng, Init::XavierNormal, true);
    for (int i = int(fw.size()) - 1; i >= 0; --i) {
      ConvLayer<S> l;
      l.dims = fw[i];
      std::string name = prefix + "/deconv" + std::to_string(int(fw.size()) - 1 - i);
      l.w = &reg.create(name + "/w", l.dims.out_channels, l.dims.patch());
      fill_init(*l.w, Init::XavierNormal, rng, l.dims.out_channels, l.dims.patch());
      l.b = &reg.create(name + "/b", l.dims.in_channels, 1);
      if (i > 0)
        l.norm = LayerNorm<S>(reg, name + "/norm", l.dims.in_size());
      layers.push_back(l);
    }
  }

  Var<S> operator()(Var<S> latent) const {
    Var<S> x = in(latent);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      Tape<S>& t = *x.tape;
      x = conv2d_transpose(x, t.param(*l.w), t.param(*l.b), l.dims);
      if (i + 1 < layers.size()) x = silu(l.norm(x));
    }
    return x;
  }
};

// convenience operators

template <typename S>
Var<S> operator+(Var<S> a, Var<S> b) {
  return add(a, b);
}
template <typename S>
Var<S> operator-(Var<S> a, Var<S> b) {
  return sub(a, b);
}
template <typename S>
Var<S> operator-(Var<S> a) {
  return neg(a);
}
template <typename S>
Var<S> operator*(Var<S> a, Var<S> b) {
  return matmul(a, b);
}

}  // namespace dcdp
