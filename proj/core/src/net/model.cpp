#include "pivflow/net/model.hpp"

#include <cmath>

namespace pivflow::net {

void ModelConfig::validate() const {
    if (feature_dim < 8 || context_dim < 4 || hidden_dim < 4) {
        throw PreconditionError("model dims too small");
    }
    if (pyramid_levels < 1 || lookup_radius < 1 || inner_iterations < 1) {
        throw PreconditionError("pyramid_levels, lookup_radius and inner_iterations must be >= 1");
    }
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0) {
        throw PreconditionError("time_embed_dim must be even");
    }
    if (upsample_factor != 1 && upsample_factor != 2) {
        throw PreconditionError("upsample_factor must be 1 or 2");
    }
    if (flow_scale_max <= 0.0) throw PreconditionError("flow_scale_max must be positive");
}

ModelConfig ModelConfig::toy() {
    ModelConfig cfg;
    cfg.feature_dim = 32;
    cfg.context_dim = 48;
    cfg.hidden_dim = 48;
    cfg.time_embed_dim = 32;
    cfg.upsample_factor = 1;
    return cfg;
}

namespace {
constexpr int kDownsample = 8; // encoder stride; coarse grid is 1/8 resolution
} // namespace

DiffuserModel::DiffuserModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.init_seed);
    const int c1 = cfg_.encoder_c1();
    const int c2 = cfg_.encoder_c2();
    const int c3 = cfg_.feature_dim;

    f_conv1_ = Conv2dLayer(store_, "basic_encoder.conv1", 3, c1, 7, 2, 3, rng);
    f_layer1_ = ResidualBlock(store_, "basic_encoder.layer1", c1, c1, 1, rng);
    f_layer2_ = ResidualBlock(store_, "basic_encoder.layer2", c1, c2, 2, rng);
    f_layer3_ = ResidualBlock(store_, "basic_encoder.layer3", c2, c3, 2, rng);
    f_out_ = Conv2dLayer(store_, "basic_encoder.out_conv", c3, cfg_.feature_dim, 1, 1, 0, rng);

    const int ctx_out = cfg_.context_dim + cfg_.hidden_dim;
    c_conv1_ = Conv2dLayer(store_, "context_encoder.conv1", 3, c1, 7, 2, 3, rng);
    c_layer1_ = ResidualBlock(store_, "context_encoder.layer1", c1, c1, 1, rng);
    c_layer2_ = ResidualBlock(store_, "context_encoder.layer2", c1, c2, 2, rng);
    c_layer3_ = ResidualBlock(store_, "context_encoder.layer3", c2, c3, 2, rng);
    c_out_ = Conv2dLayer(store_, "context_encoder.out_conv", c3, ctx_out, 1, 1, 0, rng);

    const int corr_planes =
        cfg_.pyramid_levels * (2 * cfg_.lookup_radius + 1) * (2 * cfg_.lookup_radius + 1);
    convc1_ = Conv2dLayer(store_, "updater.motion_encoder.convc1", corr_planes,
                          cfg_.motion_corr1(), 1, 1, 0, rng);
    convc2_ = Conv2dLayer(store_, "updater.motion_encoder.convc2", cfg_.motion_corr1(),
                          cfg_.motion_corr2(), 3, 1, 1, rng);
    convf1_ = Conv2dLayer(store_, "updater.motion_encoder.convf1", 2, cfg_.motion_flow1(), 7, 1,
                          3, rng);
    convf2_ = Conv2dLayer(store_, "updater.motion_encoder.convf2", cfg_.motion_flow1(),
                          cfg_.motion_flow2(), 3, 1, 1, rng);
    convm_ = Conv2dLayer(store_, "updater.motion_encoder.conv",
                         cfg_.motion_corr2() + cfg_.motion_flow2(), cfg_.motion_dim() - 2, 3, 1,
                         1, rng);

    time_mlp1_ = LinearLayer(store_, "updater.ee.time_mlp1", cfg_.time_embed_dim,
                             2 * cfg_.time_embed_dim, rng);
    time_mlp2_ = LinearLayer(store_, "updater.ee.time_mlp2", 2 * cfg_.time_embed_dim,
                             cfg_.ee_dim(), rng);
    fuse_conv_ = Conv2dLayer(store_, "updater.ee.fuse_conv",
                             cfg_.motion_dim() + cfg_.context_dim, cfg_.ee_dim(), 3, 1, 1, rng);
    fuse_cat_conv_ = Conv2dLayer(store_, "updater.ee.fuse_cat_conv", 2 * cfg_.ee_dim(),
                                 cfg_.ee_dim(), 1, 1, 0, rng);

    gru_ = ConvGru(store_, "updater.gru", cfg_.hidden_dim, cfg_.ee_dim(), rng);
    flow_head1_ = Conv2dLayer(store_, "updater.flow_head.conv1", cfg_.hidden_dim,
                              cfg_.head_dim(), 3, 1, 1, rng);
    flow_head2_ = Conv2dLayer(store_, "updater.flow_head.conv2", cfg_.head_dim(), 2, 3, 1, 1,
                              rng);
    mask_head1_ = Conv2dLayer(store_, "updater.mask_head.conv1", cfg_.hidden_dim,
                              cfg_.head_dim(), 3, 1, 1, rng);
    mask_head2_ = Conv2dLayer(store_, "updater.mask_head.conv2", cfg_.head_dim(),
                              9 * kDownsample * kDownsample, 1, 1, 0, rng);
}

namespace {

/// Pseudo-color adaptation: replicate the single channel three times,
/// mapped from [0,1] to [-1,1].
Tensor replicate_to_rgb(const Grid2d& frame) {
    Tensor t({3, frame.height, frame.width});
    const long plane = static_cast<long>(frame.height) * frame.width;
    for (long i = 0; i < plane; ++i) {
        const double x = 2.0 * frame.data[static_cast<size_t>(i)] - 1.0;
        t[i] = x;
        t[plane + i] = x;
        t[2 * plane + i] = x;
    }
    return t;
}

} // namespace

Var DiffuserModel::encode_frame(const Grid2d& frame, bool context) const {
    Var x = make_const(replicate_to_rgb(frame));
    if (context) {
        x = relu(c_conv1_(x));
        x = c_layer1_(x);
        x = c_layer2_(x);
        x = c_layer3_(x);
        return c_out_(x);
    }
    x = relu(f_conv1_(x));
    x = f_layer1_(x);
    x = f_layer2_(x);
    x = f_layer3_(x);
    return f_out_(x);
}

ConditionSet DiffuserModel::encode(const ImagePair& pair) const {
    if (!pair.frame_a.same_shape(pair.frame_b)) {
        throw ShapeMismatch("encode: frames differ in shape");
    }
    if (pair.height() % kDownsample != 0 || pair.width() % kDownsample != 0) {
        throw DimensionNotDivisible("encode: " + std::to_string(pair.height()) + "x" +
                                    std::to_string(pair.width()) +
                                    " is not divisible by 8");
    }

    ConditionSet cond;
    cond.full_h = pair.height();
    cond.full_w = pair.width();
    cond.coarse_h = pair.height() / kDownsample;
    cond.coarse_w = pair.width() / kDownsample;

    cond.fmap1 = encode_frame(pair.frame_a, false);
    cond.fmap2 = encode_frame(pair.frame_b, false);

    // All-pairs dot products, scaled by 1/sqrt(C); deeper levels correlate
    // against average-pooled frame-2 features (equivalent to pooling the
    // volume, since the dot product is linear in its second argument).
    const int C = cfg_.feature_dim;
    const long hw = static_cast<long>(cond.coarse_h) * cond.coarse_w;
    const Var f1_rows =
        transpose2d(reshape(cond.fmap1, {C, static_cast<int>(hw)})); // [hw, C]
    Var f2_level = cond.fmap2;
    for (int level = 0; level < cfg_.pyramid_levels; ++level) {
        if (level > 0) {
            if (f2_level->value.dim(1) % 2 != 0 || f2_level->value.dim(2) % 2 != 0) {
                throw DimensionNotDivisible(
                    "encode: coarse grid does not support pyramid level " +
                    std::to_string(level) + "; reduce model.pyramid_levels");
            }
            f2_level = avg_pool(f2_level, 2);
        }
        const int hl = f2_level->value.dim(1);
        const int wl = f2_level->value.dim(2);
        Var corr = matmul(f1_rows, reshape(f2_level, {C, hl * wl}));
        corr = scale(corr, 1.0 / std::sqrt(static_cast<double>(C)));
        cond.corr_pyramid.push_back(reshape(corr, {static_cast<int>(hw), hl, wl}));
    }

    const Var ctx = encode_frame(pair.frame_a, true);
    cond.x_c = relu(slice_channels(ctx, 0, cfg_.context_dim));
    cond.x_h = tanh_op(
        slice_channels(ctx, cfg_.context_dim, cfg_.context_dim + cfg_.hidden_dim));
    cond.x_h_init = cond.x_h;
    return cond;
}

Var DiffuserModel::embed_enhance(int t, const Var& flow_coarse, const Var& x_c,
                                 const Var& corr_features) const {
    if (t < 0) throw PreconditionError("embed_enhance: t must be >= 0");

    // Motion encoding of the current flow state and its correlation window.
    Var c = relu(convc1_(corr_features));
    c = relu(convc2_(c));
    Var f = relu(convf1_(flow_coarse));
    f = relu(convf2_(f));
    Var motion = relu(convm_(concat_channels({c, f})));
    motion = concat_channels({motion, flow_coarse});

    Var base = relu(fuse_conv_(concat_channels({motion, x_c})));

    const Var emb = make_const(sinusoidal_embedding(static_cast<double>(t), cfg_.time_embed_dim));
    const Var tvec = time_mlp2_(relu(time_mlp1_(emb)));

    if (!cfg_.ee_concat_fusion) {
        return add_channel_vec(base, tvec);
    }
    // Concatenation fusion: broadcast the time vector into a feature map.
    Tensor zeros({cfg_.ee_dim(), base->value.dim(1), base->value.dim(2)});
    const Var tmap = add_channel_vec(make_const(std::move(zeros)), tvec);
    return relu(fuse_cat_conv_(concat_channels({base, tmap})));
}

Var DiffuserModel::upsample_mask(const Var& x_h) const {
    Var m = relu(mask_head1_(x_h));
    m = mask_head2_(m);
    m = scale(m, 0.25); // tempered logits stabilize early training
    return softmax_groups(m, 9);
}

Var DiffuserModel::denoise_once(const Var& v_t_norm, int t, ConditionSet& cond) const {
    if (v_t_norm->value.ndim() != 3 || v_t_norm->value.dim(0) != 2 ||
        v_t_norm->value.dim(1) != cond.full_h || v_t_norm->value.dim(2) != cond.full_w) {
        throw ShapeMismatch("denoise_once: v_t must be [2," + std::to_string(cond.full_h) +
                            "," + std::to_string(cond.full_w) + "]");
    }
    if (cfg_.reset_hidden_per_step) cond.x_h = cond.x_h_init;

    // Working-resolution normalized flow -> coarse-pixel units.
    Var flow = scale(avg_pool(v_t_norm, kDownsample), cfg_.flow_scale_max / kDownsample);

    for (int k = 0; k < cfg_.inner_iterations; ++k) {
        const Var corr_features = corr_lookup(cond.corr_pyramid, flow, cfg_.lookup_radius);
        cond.x_o = embed_enhance(t, flow, cond.x_c, corr_features);
        cond.x_h = gru_(cond.x_h, cond.x_o);
        const Var dflow = flow_head2_(relu(flow_head1_(cond.x_h)));
        flow = add(flow, dflow);
    }

    const Var mask = upsample_mask(cond.x_h);
    const Var up = convex_upsample(flow, mask, kDownsample);
    // Coarse-pixel units -> working pixels -> normalized.
    return scale(up, kDownsample / cfg_.flow_scale_max);
}

VelocityField DiffuserModel::denoise_once_field(const VelocityField& v_t_norm, int t,
                                                ConditionSet& cond) const {
    NoGradGuard no_grad;
    const Var v_t = make_const(field_to_tensor(v_t_norm));
    const Var pred = denoise_once(v_t, t, cond);
    return tensor_to_field(pred->value, v_t_norm.coordinate_scale);
}

Tensor field_to_tensor(const VelocityField& f) {
    Tensor t({2, f.height(), f.width()});
    const long plane = static_cast<long>(f.height()) * f.width();
    for (long i = 0; i < plane; ++i) {
        t[i] = f.u.data[static_cast<size_t>(i)];
        t[plane + i] = f.v.data[static_cast<size_t>(i)];
    }
    return t;
}

VelocityField tensor_to_field(const Tensor& t, double coordinate_scale) {
    if (t.ndim() != 3 || t.dim(0) != 2) {
        throw ShapeMismatch("tensor_to_field expects [2,H,W]");
    }
    VelocityField f(t.dim(1), t.dim(2), coordinate_scale);
    const long plane = static_cast<long>(t.dim(1)) * t.dim(2);
    for (long i = 0; i < plane; ++i) {
        f.u.data[static_cast<size_t>(i)] = t[i];
        f.v.data[static_cast<size_t>(i)] = t[plane + i];
    }
    return f;
}

} // namespace pivflow::net
