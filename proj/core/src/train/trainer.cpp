#include "pivflow/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pivflow/core/interp.hpp"
#include "pivflow/eval/metrics.hpp"

namespace pivflow::train {

namespace fs = std::filesystem;

double l1_flow_loss(const VelocityField& pred, const VelocityField& gt,
                    const Grid2d& valid_mask) {
    if (pred.height() != gt.height() || pred.width() != gt.width() ||
        valid_mask.height != gt.height() || valid_mask.width != gt.width()) {
        throw ShapeMismatch("l1_flow_loss: shape mismatch");
    }
    double sum = 0.0;
    long n = 0;
    for (size_t i = 0; i < valid_mask.data.size(); ++i) {
        if (valid_mask.data[i] == 0.0) continue;
        sum += std::fabs(pred.u.data[i] - gt.u.data[i]) +
               std::fabs(pred.v.data[i] - gt.v.data[i]);
        n += 2;
    }
    if (n == 0) throw EmptyMask("l1_flow_loss: no valid pixels");
    return sum / static_cast<double>(n);
}

net::Var l1_flow_loss(const net::Var& pred, const net::Tensor& gt, const net::Tensor& mask) {
    using namespace net;
    if (!pred->value.same_shape(gt) || !gt.same_shape(mask)) {
        throw ShapeMismatch("l1_flow_loss: shape mismatch");
    }
    double count = 0.0;
    for (long i = 0; i < mask.numel(); ++i) count += mask[i] != 0.0 ? 1.0 : 0.0;
    if (count == 0.0) throw EmptyMask("l1_flow_loss: no valid pixels");
    Var diff = abs_op(sub(pred, make_const(gt)));
    diff = mul(diff, make_const(mask));
    return scale(sum_all(diff), 1.0 / count);
}

void TrainConfig::validate() const {
    if (total_steps < 1) throw PreconditionError("total_steps must be >= 1");
    if (batch_size < 1) throw PreconditionError("batch_size must be >= 1");
    if (peak_lr <= 0.0) throw PreconditionError("peak_lr must be positive");
    if (warmup_fraction < 0.0 || warmup_fraction > 0.5) {
        throw PreconditionError("warmup_fraction must lie in [0, 0.5]");
    }
    if (div_factor < 1.0 || final_div_factor < 1.0) {
        throw PreconditionError("div factors must be >= 1");
    }
    if (crop_size < 16) throw PreconditionError("crop_size must be >= 16");
}

double one_cycle_lr(long step, const TrainConfig& cfg) {
    if (step < 0 || step > cfg.total_steps) {
        throw PreconditionError("one_cycle_lr: step outside [0, total_steps]");
    }
    const double initial = cfg.peak_lr / cfg.div_factor;
    const double final_lr = cfg.peak_lr / cfg.final_div_factor;
    const long warmup = std::llround(cfg.warmup_fraction * cfg.total_steps);
    if (step <= warmup) {
        if (warmup == 0) return cfg.peak_lr;
        const double f = static_cast<double>(step) / warmup;
        return initial + (cfg.peak_lr - initial) * f;
    }
    const double f = static_cast<double>(step - warmup) / (cfg.total_steps - warmup);
    if (cfg.cosine_anneal) {
        return final_lr + (cfg.peak_lr - final_lr) * 0.5 * (1.0 + std::cos(M_PI * f));
    }
    return cfg.peak_lr + (final_lr - cfg.peak_lr) * f;
}

AdamW::AdamW(const std::vector<net::NamedParam>& params, double weight_decay, double clip_norm)
    : weight_decay_(weight_decay), clip_norm_(clip_norm) {
    for (const auto& p : params) {
        Slot s;
        s.var = p.var;
        s.name = p.name;
        s.m = net::Tensor::zeros(p.var->value.shape());
        s.v = net::Tensor::zeros(p.var->value.shape());
        slots_.push_back(std::move(s));
    }
}

void AdamW::step(double lr) {
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;

    double total_sq = 0.0;
    for (const Slot& s : slots_) {
        if (s.var->grad.numel() != s.var->value.numel()) continue;
        for (long i = 0; i < s.var->grad.numel(); ++i) {
            total_sq += s.var->grad[i] * s.var->grad[i];
        }
    }
    const double norm = std::sqrt(total_sq);
    const double clip_scale =
        clip_norm_ > 0.0 && norm > clip_norm_ ? clip_norm_ / norm : 1.0;

    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count_));

    for (Slot& s : slots_) {
        const bool has_grad = s.var->grad.numel() == s.var->value.numel();
        for (long i = 0; i < s.var->value.numel(); ++i) {
            const double g = has_grad ? s.var->grad[i] * clip_scale : 0.0;
            s.m[i] = beta1 * s.m[i] + (1.0 - beta1) * g;
            s.v[i] = beta2 * s.v[i] + (1.0 - beta2) * g * g;
            const double m_hat = s.m[i] / bc1;
            const double v_hat = s.v[i] / bc2;
            s.var->value[i] -=
                lr * (m_hat / (std::sqrt(v_hat) + eps) + weight_decay_ * s.var->value[i]);
        }
    }
}

void AdamW::zero_grad() {
    for (Slot& s : slots_) {
        if (s.var->grad.numel() > 0) {
            std::fill(s.var->grad.raw().begin(), s.var->grad.raw().end(), 0.0);
        }
    }
}

void AdamW::save_state(Checkpoint& ckpt) const {
    auto& step_entry = ckpt.upsert("__opt__.step");
    step_entry.shape = {1};
    step_entry.data = {static_cast<double>(step_count_)};
    for (const Slot& s : slots_) {
        auto& m = ckpt.upsert("__opt__.m." + s.name);
        m.shape = s.m.shape();
        m.data = s.m.raw();
        auto& v = ckpt.upsert("__opt__.v." + s.name);
        v.shape = s.v.shape();
        v.data = s.v.raw();
    }
}

bool AdamW::load_state(const Checkpoint& ckpt) {
    const auto* step_entry = ckpt.find("__opt__.step");
    if (!step_entry || step_entry->data.size() != 1) return false;
    step_count_ = static_cast<long>(step_entry->data[0]);
    for (Slot& s : slots_) {
        const auto* m = ckpt.find("__opt__.m." + s.name);
        const auto* v = ckpt.find("__opt__.v." + s.name);
        if (!m || !v || m->shape != s.m.shape() || v->shape != s.v.shape()) return false;
        s.m.raw() = m->data;
        s.v.raw() = v->data;
    }
    return true;
}

namespace {

struct TrainingSample {
    ImagePair pair;
    VelocityField gt;
    std::string id;
};

TrainingSample prepare_sample(const FlowSample& src, const TrainConfig& cfg, Rng& rng) {
    TrainingSample out;
    out.id = src.id();
    const int H = src.pair.height();
    const int W = src.pair.width();
    const int ch = std::min(cfg.crop_size, H);
    const int cw = std::min(cfg.crop_size, W);

    int y0 = 0, x0 = 0;
    if (H > ch) y0 = static_cast<int>(rng.uniform_int(0, H - ch));
    if (W > cw) x0 = static_cast<int>(rng.uniform_int(0, W - cw));

    out.pair.frame_a = crop(src.pair.frame_a, y0, x0, ch, cw);
    out.pair.frame_b = crop(src.pair.frame_b, y0, x0, ch, cw);
    out.pair.source_id = src.id();
    out.gt = VelocityField(ch, cw);
    for (int y = 0; y < ch; ++y) {
        for (int x = 0; x < cw; ++x) {
            out.gt.u.at(y, x) = src.gt->u.at(y0 + y, x0 + x);
            out.gt.v.at(y, x) = src.gt->v.at(y0 + y, x0 + x);
        }
    }

    if (cfg.augment_flips) {
        const bool flip_h = rng.uniform() < 0.5;
        const bool flip_v = rng.uniform() < 0.5;
        if (flip_h) { // mirror columns; u changes sign
            auto mirror = [&](Grid2d& g, double sign) {
                for (int y = 0; y < g.height; ++y) {
                    for (int x = 0; x < g.width / 2; ++x) {
                        std::swap(g.at(y, x), g.at(y, g.width - 1 - x));
                    }
                    for (int x = 0; x < g.width; ++x) g.at(y, x) *= sign;
                }
            };
            mirror(out.pair.frame_a, 1.0);
            mirror(out.pair.frame_b, 1.0);
            mirror(out.gt.u, -1.0);
            mirror(out.gt.v, 1.0);
        }
        if (flip_v) { // mirror rows; v changes sign
            auto mirror = [&](Grid2d& g, double sign) {
                for (int y = 0; y < g.height / 2; ++y) {
                    for (int x = 0; x < g.width; ++x) {
                        std::swap(g.at(y, x), g.at(g.height - 1 - y, x));
                    }
                }
                for (double& v : g.data) v *= sign;
            };
            mirror(out.pair.frame_a, 1.0);
            mirror(out.pair.frame_b, 1.0);
            mirror(out.gt.u, 1.0);
            mirror(out.gt.v, -1.0);
        }
    }
    return out;
}

double validation_aee(net::DiffuserModel& model, const std::vector<FlowSample>& samples,
                      const diffusion::DiffusionSchedule& schedule,
                      const diffusion::FlowNormalizer& normalizer, std::uint64_t eval_seed) {
    double total = 0.0;
    long n = 0;
    for (const FlowSample& s : samples) {
        if (!s.gt) continue;
        Rng rng(eval_seed + static_cast<std::uint64_t>(n));
        const VelocityField pred = net::estimate(s.pair, model, schedule, normalizer, rng);
        total += eval::aee(pred, *s.gt);
        ++n;
    }
    return n > 0 ? total / n : std::numeric_limits<double>::quiet_NaN();
}

} // namespace

TrainResult train(net::DiffuserModel& model, const std::vector<FlowSample>& train_samples,
                  const std::vector<FlowSample>& val_samples,
                  const diffusion::DiffusionSchedule& schedule,
                  const diffusion::FlowNormalizer& normalizer, const TrainConfig& cfg,
                  const fs::path& out_dir,
                  const std::function<void(const LogRecord&)>& on_step) {
    cfg.validate();
    if (train_samples.empty()) {
        throw PreconditionError("train: empty training split");
    }
    for (const FlowSample& s : train_samples) {
        if (!s.gt) throw PreconditionError("train: sample " + s.id() + " has no ground truth");
    }
    fs::create_directories(out_dir);

    AdamW opt(model.parameters(), cfg.weight_decay, cfg.grad_clip_norm);
    Rng rng(cfg.seed);
    long start_step = 0;

    if (!cfg.resume_from.empty()) {
        const Checkpoint ckpt = load_checkpoint(cfg.resume_from);
        const RemapReport report = remap_checkpoint(ckpt, model);
        if (!report.missing.empty()) {
            throw Error("resume checkpoint is missing " +
                        std::to_string(report.missing.size()) + " parameters");
        }
        if (!opt.load_state(ckpt)) {
            throw Error("resume checkpoint lacks optimizer state");
        }
        const auto* rng_entry = ckpt.find("__rng__.train");
        if (!rng_entry || rng_entry->blob.empty()) {
            throw Error("resume checkpoint lacks rng state");
        }
        std::istringstream is(rng_entry->blob);
        rng.load_state(is);
        start_step = opt.step_count();
    }

    const std::vector<FlowSample>& eval_samples =
        val_samples.empty() ? train_samples : val_samples;

    auto save_with_state = [&](const fs::path& path) {
        Checkpoint ckpt = checkpoint_from_model(model, "pivflow-train");
        opt.save_state(ckpt);
        std::ostringstream os;
        rng.save_state(os);
        ckpt.upsert("__rng__.train").blob = os.str();
        save_checkpoint(ckpt, path);
    };

    TrainResult result;
    for (long step = start_step + 1; step <= cfg.total_steps; ++step) {
        const double lr = one_cycle_lr(step, cfg);

        net::Var loss_total;
        std::string batch_ids;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto idx = rng.uniform_int(0, static_cast<long>(train_samples.size()) - 1);
            const TrainingSample ts =
                prepare_sample(train_samples[static_cast<size_t>(idx)], cfg, rng);
            batch_ids += (b ? "," : "") + ts.id;

            const int t = static_cast<int>(rng.uniform_int(1, schedule.T()));
            VelocityField noise(ts.gt.height(), ts.gt.width());
            for (double& x : noise.u.data) x = rng.normal();
            for (double& x : noise.v.data) x = rng.normal();

            const VelocityField gt_norm = diffusion::normalize_flow(ts.gt, normalizer);
            const VelocityField v_t = diffusion::forward_noise(gt_norm, t, noise, schedule);

            net::ConditionSet cond = model.encode(ts.pair);
            const net::Var v_t_var = net::make_const(net::field_to_tensor(v_t));
            const net::Var pred_norm = model.denoise_once(v_t_var, t, cond);
            const net::Var pred_px = net::scale(pred_norm, normalizer.scale_max);

            const net::Tensor gt_tensor = net::field_to_tensor(ts.gt);
            const net::Tensor mask = net::Tensor::full(gt_tensor.shape(), 1.0);
            const net::Var sample_loss = l1_flow_loss(pred_px, gt_tensor, mask);
            loss_total = loss_total ? net::add(loss_total, sample_loss) : sample_loss;
        }
        const net::Var loss = net::scale(loss_total, 1.0 / cfg.batch_size);

        const double loss_value = loss->value[0];
        if (!std::isfinite(loss_value)) {
            throw NonFiniteLoss("non-finite loss at step " + std::to_string(step) +
                                " (batch: " + batch_ids + ")");
        }

        net::backward(loss);
        opt.step(lr);
        opt.zero_grad();

        LogRecord record;
        record.step = step;
        record.loss = loss_value;
        record.lr = lr;

        const bool cadence =
            cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == cfg.total_steps);
        if (cadence) {
            record.val_aee = validation_aee(model, eval_samples, schedule, normalizer,
                                            cfg.seed * 0x9e3779b97f4a7c15ull + step);
            save_with_state(out_dir / ("checkpoint_step_" + std::to_string(step) + ".ckpt"));
        }
        result.log.push_back(record);
        if (on_step) on_step(record);
    }

    result.final_checkpoint = out_dir / "checkpoint_final.ckpt";
    save_with_state(result.final_checkpoint);
    write_train_log(result.log, out_dir / "train_log.tsv");
    return result;
}

void write_train_log(const std::vector<LogRecord>& log, const fs::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IOFailure("cannot write " + path.string());
    f << "step\tloss\tlr\tval_aee\n";
    char buf[128];
    for (const LogRecord& r : log) {
        if (r.val_aee) {
            std::snprintf(buf, sizeof(buf), "%ld\t%.17g\t%.17g\t%.17g\n", r.step, r.loss, r.lr,
                          *r.val_aee);
        } else {
            std::snprintf(buf, sizeof(buf), "%ld\t%.17g\t%.17g\t-\n", r.step, r.loss, r.lr);
        }
        f << buf;
    }
    if (!f) throw IOFailure("write failed for " + path.string());
}

} // namespace pivflow::train
