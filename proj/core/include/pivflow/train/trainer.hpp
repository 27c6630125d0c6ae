#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pivflow/diffusion/sampler.hpp"
#include "pivflow/net/estimate.hpp"
#include "pivflow/train/checkpoint.hpp"

namespace pivflow::train {

/// Loss became NaN/Inf; aborts with the offending batch ids.
struct NonFiniteLoss : Error {
    explicit NonFiniteLoss(const std::string& msg) : Error(msg) {}
};

struct EmptyMask : Error {
    explicit EmptyMask(const std::string& msg) : Error(msg) {}
};

/// Mean over valid pixels and both components of |pred - gt|.
double l1_flow_loss(const VelocityField& pred, const VelocityField& gt,
                    const Grid2d& valid_mask);

/// In-graph variant used by the training loop (pred is [2,H,W]).
net::Var l1_flow_loss(const net::Var& pred, const net::Tensor& gt, const net::Tensor& mask);

struct TrainConfig {
    long total_steps = 2000;
    int batch_size = 2;
    double peak_lr = 1.25e-4;
    double warmup_fraction = 0.05; // one-cycle warmup share
    double div_factor = 25.0;      // initial lr = peak / div
    double final_div_factor = 1e4; // final lr = peak / final_div
    bool cosine_anneal = true;     // false: linear anneal
    double weight_decay = 1e-5;
    double grad_clip_norm = 1.0;
    int crop_size = 64;
    std::uint64_t seed = 0;
    long eval_every = 250; // 0 disables validation/checkpoint cadence
    bool augment_flips = true;
    std::string resume_from; // checkpoint path, empty = fresh

    void validate() const;
};

/// One-cycle learning rate: ramp from peak/div to peak over the warmup
/// fraction, then anneal (cosine by default) to peak/final_div.
double one_cycle_lr(long step, const TrainConfig& cfg);

struct LogRecord {
    long step = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::optional<double> val_aee;
};

struct TrainResult {
    std::vector<LogRecord> log;
    std::filesystem::path final_checkpoint;
};

/// AdamW with decoupled weight decay and global-norm gradient clipping.
class AdamW {
public:
    AdamW(const std::vector<net::NamedParam>& params, double weight_decay, double clip_norm);

    void step(double lr);
    void zero_grad();

    long step_count() const { return step_count_; }

    /// Moments + step counter round-trip through checkpoints.
    void save_state(Checkpoint& ckpt) const;
    bool load_state(const Checkpoint& ckpt);

private:
    struct Slot {
        net::Var var;
        std::string name;
        net::Tensor m, v;
    };
    std::vector<Slot> slots_;
    double weight_decay_;
    double clip_norm_;
    long step_count_ = 0;
};

/// Fine-tuning loop: per step, batch_size draws of (sample, crop, flips,
/// t, noise), forward-noise the normalized gt, one conditional denoising
/// step, L1 loss in native pixels, clipped AdamW update under the
/// one-cycle schedule. Checkpoints carry optimizer and RNG state, so a
/// resumed run continues the loss trajectory bit-exactly.
TrainResult train(net::DiffuserModel& model, const std::vector<FlowSample>& train_samples,
                  const std::vector<FlowSample>& val_samples,
                  const diffusion::DiffusionSchedule& schedule,
                  const diffusion::FlowNormalizer& normalizer, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir,
                  const std::function<void(const LogRecord&)>& on_step = nullptr);

void write_train_log(const std::vector<LogRecord>& log, const std::filesystem::path& path);

} // namespace pivflow::train
