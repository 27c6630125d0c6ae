#pragma once

#include "pivflow/core/types.hpp"
#include "pivflow/net/layers.hpp"

namespace pivflow::net {

/// Spatial dims must divide by 8 at the encoder input.
struct DimensionNotDivisible : Error {
    explicit DimensionNotDivisible(const std::string& msg) : Error(msg) {}
};

struct ModelConfig {
    int feature_dim = 256;  // basic-encoder output channels
    int context_dim = 128;  // x_c channels
    int hidden_dim = 128;   // x_h channels
    int pyramid_levels = 4; // L
    int lookup_radius = 4;  // r
    int inner_iterations = 4; // K, recurrent updates per denoising step
    int time_embed_dim = 64;
    int upsample_factor = 2;  // scale-adaptation wrapper, 1 or 2
    bool ee_concat_fusion = false;      // EE time fusion: false = addition
    bool reset_hidden_per_step = false; // x_h persists across steps by default
    double flow_scale_max = 16.0;       // must match the diffusion normalizer
    std::uint64_t init_seed = 7;

    void validate() const;

    /// CPU-friendly configuration used by tests and smoke training.
    static ModelConfig toy();

    // Derived internal widths, all scaled from feature_dim.
    int encoder_c1() const { return std::max(8, feature_dim / 2); }
    int encoder_c2() const { return std::max(12, 3 * feature_dim / 4); }
    int motion_corr1() const { return 2 * feature_dim; }
    int motion_corr2() const { return 3 * feature_dim / 2; }
    int motion_flow1() const { return feature_dim; }
    int motion_flow2() const { return feature_dim / 2; }
    int motion_dim() const { return 2 * feature_dim; } // incl. appended flow
    int ee_dim() const { return 2 * feature_dim; }     // GRU input width
    int head_dim() const { return 2 * feature_dim; }
};

/// Encoder products conditioning the denoiser. x_h is the recurrent
/// hidden state and mutates across inner iterations and (by default)
/// across outer denoising steps within one estimate.
struct ConditionSet {
    std::vector<Var> corr_pyramid; // level l: [h*w, h/2^l, w/2^l]
    Var fmap1, fmap2;              // basic-encoder features (for tests)
    Var x_c;                       // context features [C_c, h, w]
    Var x_h;                       // hidden state [C_h, h, w]
    Var x_h_init;                  // initial hidden state (reset toggle)
    Var x_o;                       // latest enhanced embedding
    int coarse_h = 0, coarse_w = 0;
    int full_h = 0, full_w = 0;
};

/// Dual-encoder conditional recurrent denoising network. The denoiser
/// predicts the clean normalized flow directly.
class DiffuserModel {
public:
    explicit DiffuserModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }

    /// Runs both encoders on a (grayscale, [0,1]) pair whose dims divide
    /// by 8: pseudo-color replication, feature maps, all-pairs correlation
    /// pyramid, context split into x_c (relu) and initial x_h (tanh).
    ConditionSet encode(const ImagePair& pair) const;

    /// EE block: fuses the flow encoding, correlation features and x_c,
    /// then injects the projected sinusoidal embedding of t.
    Var embed_enhance(int t, const Var& flow_coarse, const Var& x_c,
                      const Var& corr_features) const;

    /// One conditional denoising step: downsample v_t to 1/8 (values to
    /// coarse-pixel units), K recurrent updates (lookup -> EE -> GRU ->
    /// flow head), then learned convex upsampling back to full resolution
    /// in normalized units. Mutates cond.x_h (and cond.x_o).
    Var denoise_once(const Var& v_t_norm, int t, ConditionSet& cond) const;

    /// Inference-mode convenience on flow fields (no graph).
    VelocityField denoise_once_field(const VelocityField& v_t_norm, int t,
                                     ConditionSet& cond) const;

    const std::vector<NamedParam>& parameters() const { return store_.all(); }

private:
    Var encode_frame(const Grid2d& frame, bool context) const;
    Var upsample_mask(const Var& x_h) const;

    ModelConfig cfg_;
    ParamStore store_;

    // basic encoder (shared weights for both frames)
    Conv2dLayer f_conv1_;
    ResidualBlock f_layer1_, f_layer2_, f_layer3_;
    Conv2dLayer f_out_;
    // context encoder
    Conv2dLayer c_conv1_;
    ResidualBlock c_layer1_, c_layer2_, c_layer3_;
    Conv2dLayer c_out_;
    // motion encoder
    Conv2dLayer convc1_, convc2_, convf1_, convf2_, convm_;
    // embedding enhancement
    LinearLayer time_mlp1_, time_mlp2_;
    Conv2dLayer fuse_conv_, fuse_cat_conv_;
    // recurrent update
    ConvGru gru_;
    Conv2dLayer flow_head1_, flow_head2_;
    Conv2dLayer mask_head1_, mask_head2_;
};

/// [2,H,W] tensor <-> flow-field conversions.
Tensor field_to_tensor(const VelocityField& f);
VelocityField tensor_to_field(const Tensor& t, double coordinate_scale = 1.0);

} // namespace pivflow::net
