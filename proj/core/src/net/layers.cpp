#include "pivflow/net/layers.hpp"

#include <cmath>

namespace pivflow::net {

Var ParamStore::add(const std::string& name, Tensor init) {
    for (const NamedParam& p : params_) {
        if (p.name == name) throw Error("duplicate parameter name: " + name);
    }
    Var v = make_param(std::move(init));
    params_.push_back({name, v});
    return v;
}

Conv2dLayer::Conv2dLayer(ParamStore& store, const std::string& name, int in_ch, int out_ch,
                         int k, int stride_, int pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
    const double stddev = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
    weight = store.add(name + ".weight", Tensor::randn({out_ch, in_ch, k, k}, rng, stddev));
    bias = store.add(name + ".bias", Tensor::zeros({out_ch}));
}

LinearLayer::LinearLayer(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    weight = store.add(name + ".weight", Tensor::randn({out, in}, rng, stddev));
    bias = store.add(name + ".bias", Tensor::zeros({out}));
}

Var LinearLayer::operator()(const Var& x) const {
    const int in = weight->value.dim(1);
    const int out = weight->value.dim(0);
    Var col = reshape(x, {in, 1});
    Var y = reshape(matmul(weight, col), {out});
    return add(y, bias);
}

ResidualBlock::ResidualBlock(ParamStore& store, const std::string& name, int in_ch, int out_ch,
                             int stride, Rng& rng)
    : conv1(store, name + ".conv1", in_ch, out_ch, 3, stride, 1, rng),
      conv2(store, name + ".conv2", out_ch, out_ch, 3, 1, 1, rng) {
    if (stride != 1 || in_ch != out_ch) {
        projection = Conv2dLayer(store, name + ".projection", in_ch, out_ch, 1, stride, 0, rng);
        has_projection = true;
    }
}

Var ResidualBlock::operator()(const Var& x) const {
    Var y = conv2(relu(conv1(x)));
    const Var shortcut = has_projection ? projection(x) : x;
    return relu(add(y, shortcut));
}

ConvGru::ConvGru(ParamStore& store, const std::string& name, int hidden_dim, int input_dim,
                 Rng& rng)
    : convz(store, name + ".convz", hidden_dim + input_dim, hidden_dim, 3, 1, 1, rng),
      convr(store, name + ".convr", hidden_dim + input_dim, hidden_dim, 3, 1, 1, rng),
      convq(store, name + ".convq", hidden_dim + input_dim, hidden_dim, 3, 1, 1, rng) {}

Var ConvGru::operator()(const Var& h, const Var& x) const {
    const Var hx = concat_channels({h, x});
    const Var z = sigmoid(convz(hx));
    const Var r = sigmoid(convr(hx));
    const Var q = tanh_op(convq(concat_channels({mul(r, h), x})));
    return add(mul(one_minus(z), h), mul(z, q));
}

Tensor sinusoidal_embedding(double t, int dim) {
    if (dim < 2 || dim % 2 != 0) {
        throw PreconditionError("time embedding dim must be even and >= 2");
    }
    Tensor emb({dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        emb[i] = std::sin(t * freq);
        emb[half + i] = std::cos(t * freq);
    }
    return emb;
}

} // namespace pivflow::net
