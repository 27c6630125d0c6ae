#pragma once

#include <string>
#include <vector>

#include "pivflow/net/autodiff.hpp"

namespace pivflow::net {

struct NamedParam {
    std::string name;
    Var var;
};

/// Owns the model's leaf parameter variables, keyed by dotted names.
class ParamStore {
public:
    Var add(const std::string& name, Tensor init);
    const std::vector<NamedParam>& all() const { return params_; }

private:
    std::vector<NamedParam> params_;
};

/// 3x3/7x7/1x1 convolution with He-normal init.
struct Conv2dLayer {
    Var weight; // [O, C, k, k]
    Var bias;   // [O]
    int stride = 1;
    int pad = 0;

    Conv2dLayer() = default;
    Conv2dLayer(ParamStore& store, const std::string& name, int in_ch, int out_ch, int k,
                int stride, int pad, Rng& rng);

    Var operator()(const Var& x) const { return conv2d(x, weight, bias, stride, pad); }
};

struct LinearLayer {
    Var weight; // [out, in]
    Var bias;   // [out]

    LinearLayer() = default;
    LinearLayer(ParamStore& store, const std::string& name, int in, int out, Rng& rng);

    Var operator()(const Var& x) const; // [in] -> [out]
};

/// Two-conv residual block with optional strided 1x1 projection.
struct ResidualBlock {
    Conv2dLayer conv1, conv2, projection;
    bool has_projection = false;

    ResidualBlock() = default;
    ResidualBlock(ParamStore& store, const std::string& name, int in_ch, int out_ch, int stride,
                  Rng& rng);

    Var operator()(const Var& x) const;
};

/// Single 3x3 convolutional GRU cell.
struct ConvGru {
    Conv2dLayer convz, convr, convq;

    ConvGru() = default;
    ConvGru(ParamStore& store, const std::string& name, int hidden_dim, int input_dim, Rng& rng);

    Var operator()(const Var& h, const Var& x) const;
};

/// Sinusoidal position code for the diffusion step index (constant).
Tensor sinusoidal_embedding(double t, int dim);

} // namespace pivflow::net
