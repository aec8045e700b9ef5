#include "tgr/csd.hpp"

#include "tgr/error.hpp"
#include "tgr/ply.hpp"
#include "tgr/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace tgr {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kDensifyStream = 0x64656e7369667955ULL;

const std::set<std::string>& edit_keys() {
    static const std::set<std::string> keys = {
        "prompt", "description", "tau", "tau_low", "tau_high", "lambda_ip0", "lambda_mv0", "mv_zero_fraction",
        "steps", "t_min", "t_max", "densify_interval", "densify_fraction", "prune_opacity", "split_shrink",
        "checkpoint_interval", "guidance_scale_image", "guidance_scale_text", "lr_position", "lr_scale",
        "lr_rotation", "lr_opacity", "lr_color", "seed"};
    return keys;
}

int to_int(long long v, const char* key) {
    if (v < 0 || v > 100000000) throw ValidationError(std::string("config key '") + key + "' is out of range");
    return static_cast<int>(v);
}

double residual_norm(const Image& r) {
    double s = 0;
    for (float x : r.data) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

std::string step_name(int step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step_%05d", step);
    return buf;
}

void write_previews(const std::array<Image, kRingSize>& renders, const fs::path& dir, int step) {
    fs::create_directories(dir);
    for (std::size_t v = 0; v < kRingSize; ++v)
        write_png(renders[v], (dir / (step_name(step) + "_view" + std::to_string(v) + ".png")).string());
}

} // namespace

// ---------------------------------------------------------------- config

void EditConfig::validate() const {
    if (!(tau >= -1.0 && tau <= 1.0)) throw ValidationError("tau must lie in [-1, 1]");
    if (!(tau_low >= 0.0 && tau_low < tau_high && tau_high <= 1.0))
        throw ValidationError("gate band needs 0 <= tau_low < tau_high <= 1");
    if (!(mv_zero_fraction > 0.0 && mv_zero_fraction <= 1.0)) throw ValidationError("mv_zero_fraction must lie in (0, 1]");
    if (!(densify_fraction > 0.0 && densify_fraction <= 1.0)) throw ValidationError("densify_fraction must lie in (0, 1]");
    if (!(lambda_ip0 >= 0.0) || !(lambda_mv0 >= 0.0)) throw ValidationError("initial weights must be non-negative");
    if (steps <= 0) throw ValidationError("steps must be positive");
    if (!(t_min >= kNoiseLevelMin && t_min <= t_max && t_max <= kNoiseLevelMax))
        throw ValidationError("t range must lie within [0.02, 0.2]");
    if (densify_interval < 0 || checkpoint_interval < 0) throw ValidationError("intervals must be non-negative");
    if (!(prune_opacity >= 0.0 && prune_opacity < 1.0)) throw ValidationError("prune_opacity must lie in [0, 1)");
    if (!(split_shrink > 1.0)) throw ValidationError("split_shrink must exceed 1");
    for (double lr : {this->lr.position, this->lr.log_scale, this->lr.rotation, this->lr.opacity, this->lr.color})
        if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("learning rates must be non-negative");
}

EditConfig EditConfig::from(const KeyValueConfig& kv) {
    kv.require_known(edit_keys());
    EditConfig c;
    c.prompt = kv.get_string("prompt", c.prompt);
    c.description = kv.get_string("description", c.description);
    c.tau = kv.get_double("tau", c.tau);
    c.tau_low = kv.get_double("tau_low", c.tau_low);
    c.tau_high = kv.get_double("tau_high", c.tau_high);
    c.lambda_ip0 = kv.get_double("lambda_ip0", c.lambda_ip0);
    c.lambda_mv0 = kv.get_double("lambda_mv0", c.lambda_mv0);
    c.mv_zero_fraction = kv.get_double("mv_zero_fraction", c.mv_zero_fraction);
    c.steps = to_int(kv.get_int("steps", c.steps), "steps");
    c.t_min = kv.get_double("t_min", c.t_min);
    c.t_max = kv.get_double("t_max", c.t_max);
    c.densify_interval = to_int(kv.get_int("densify_interval", c.densify_interval), "densify_interval");
    c.densify_fraction = kv.get_double("densify_fraction", c.densify_fraction);
    c.prune_opacity = kv.get_double("prune_opacity", c.prune_opacity);
    c.split_shrink = kv.get_double("split_shrink", c.split_shrink);
    c.checkpoint_interval = to_int(kv.get_int("checkpoint_interval", c.checkpoint_interval), "checkpoint_interval");
    c.guidance_scale_image = kv.get_double("guidance_scale_image", c.guidance_scale_image);
    c.guidance_scale_text = kv.get_double("guidance_scale_text", c.guidance_scale_text);
    c.lr.position = kv.get_double("lr_position", c.lr.position);
    c.lr.log_scale = kv.get_double("lr_scale", c.lr.log_scale);
    c.lr.rotation = kv.get_double("lr_rotation", c.lr.rotation);
    c.lr.opacity = kv.get_double("lr_opacity", c.lr.opacity);
    c.lr.color = kv.get_double("lr_color", c.lr.color);
    c.seed = kv.get_u64("seed", c.seed);
    c.validate();
    return c;
}

KeyValueConfig EditConfig::to_config() const {
    KeyValueConfig kv;
    kv.set("prompt", prompt);
    kv.set("description", description);
    kv.set("tau", format_double(tau));
    kv.set("tau_low", format_double(tau_low));
    kv.set("tau_high", format_double(tau_high));
    kv.set("lambda_ip0", format_double(lambda_ip0));
    kv.set("lambda_mv0", format_double(lambda_mv0));
    kv.set("mv_zero_fraction", format_double(mv_zero_fraction));
    kv.set("steps", std::to_string(steps));
    kv.set("t_min", format_double(t_min));
    kv.set("t_max", format_double(t_max));
    kv.set("densify_interval", std::to_string(densify_interval));
    kv.set("densify_fraction", format_double(densify_fraction));
    kv.set("prune_opacity", format_double(prune_opacity));
    kv.set("split_shrink", format_double(split_shrink));
    kv.set("checkpoint_interval", std::to_string(checkpoint_interval));
    kv.set("guidance_scale_image", format_double(guidance_scale_image));
    kv.set("guidance_scale_text", format_double(guidance_scale_text));
    kv.set("lr_position", format_double(lr.position));
    kv.set("lr_scale", format_double(lr.log_scale));
    kv.set("lr_rotation", format_double(lr.rotation));
    kv.set("lr_opacity", format_double(lr.opacity));
    kv.set("lr_color", format_double(lr.color));
    kv.set("seed", std::to_string(seed));
    return kv;
}

// ---------------------------------------------------------------- schedule and gate

ScheduleWeights weight_schedule(double e, const EditConfig& config) {
    if (!(e >= 0.0 && e <= 1.0)) throw ValidationError("epoch fraction must lie in [0, 1]");
    ScheduleWeights w;
    w.multiview = config.lambda_mv0 * std::max(0.0, 1.0 - e / config.mv_zero_fraction);
    w.image = config.lambda_ip0 + (config.lambda_mv0 - w.multiview);
    return w;
}

float score_gate(float score, const EditConfig& config) {
    // Scores are single precision, so thresholds are compared at that precision.
    if (score <= static_cast<float>(config.tau_low)) return 0.0f;
    if (score >= static_cast<float>(config.tau_high)) return 1.0f;
    const double g = (static_cast<double>(score) - config.tau_low) / (config.tau_high - config.tau_low);
    return static_cast<float>(std::clamp(g, 0.0, 1.0));
}

std::vector<float> score_gates(std::span<const float> scores, const EditConfig& config) {
    std::vector<float> g(scores.size());
    std::transform(scores.begin(), scores.end(), g.begin(), [&](float s) { return score_gate(s, config); });
    return g;
}

// ---------------------------------------------------------------- optimizer state

CsdState::CsdState(std::size_t n)
    : position(n, 3), log_scale(n, 3), rotation(n, 4), color(n, 3), opacity(n, 1), grad_accum(n, 0.0),
      grad_steps(n, 0) {}

void CsdState::remap(std::span<const long long> source) {
    for (AdamState* s : {&position, &log_scale, &rotation, &color, &opacity}) s->remap(source);
    grad_accum.assign(source.size(), 0.0);
    grad_steps.assign(source.size(), 0);
}

Image combine_residuals(const Image* ip, const Image* mv, double lambda_1, double lambda_2) {
    const Image* shape = ip ? ip : mv;
    if (!shape) throw InvariantError("combine_residuals needs at least one residual");
    Image out(shape->width, shape->height, shape->channels);
    for (std::size_t k = 0; k < out.data.size(); ++k) {
        double v = 0.0;
        if (ip) v += lambda_1 * static_cast<double>(ip->data[k]);
        if (mv) v += lambda_2 * static_cast<double>(mv->data[k]);
        out.data[k] = static_cast<float>(v);
    }
    return out;
}

Image render_image(const GaussianScene& scene, const Camera& camera) {
    RenderOutput out = render(scene, camera, ChannelSet::color_only());
    Image img;
    img.width = out.width;
    img.height = out.height;
    img.channels = 3;
    img.data = std::move(out.color);
    return img;
}

GuidanceRequest make_request(const StepInputs& in, const std::array<Image, kRingSize>& renders,
                             const EditConfig& config, bool multiview) {
    GuidanceRequest req;
    req.prompt = config.prompt;
    req.noise_level = in.noise_level;
    req.noise_seed = in.noise_seed;
    for (std::size_t v = 0; v < kRingSize; ++v) {
        req.poses[v] = pose_of(in.ring->cameras[v]);
        req.rendered_views.push_back(renders[v]);
        req.original_views.push_back((*in.originals)[v]);
    }
    if (multiview) {
        if (!config.description.empty()) req.config["description"] = config.description;
    } else {
        req.config["guidance_scale_image"] = format_double(config.guidance_scale_image);
        req.config["guidance_scale_text"] = format_double(config.guidance_scale_text);
    }
    return req;
}

// ---------------------------------------------------------------- step

StepReport csd_step(GaussianScene& scene, CsdState& state, std::span<const float> gate, const StepInputs& in,
                    const EditConfig& config) {
    const std::size_t n = scene.size();
    if (gate.size() != n || state.size() != n || state.position.rows() != n)
        throw ValidationError("gate and optimizer state must cover every Gaussian");
    if (!in.ring || !in.originals || !in.image_provider || !in.multiview_provider)
        throw InvariantError("csd_step inputs are incomplete");

    std::array<Image, kRingSize> renders;
    for (std::size_t v = 0; v < kRingSize; ++v) renders[v] = render_image(scene, in.ring->cameras[v]);

    // Everything below may throw; nothing is mutated until the update.
    std::optional<GuidanceResponse> ip, mv;
    if (in.weights.image != 0.0) {
        const GuidanceRequest req = make_request(in, renders, config, false);
        ip = in.image_provider->guide(req);
        ip->validate(req);
    }
    if (in.weights.multiview != 0.0) {
        const GuidanceRequest req = make_request(in, renders, config, true);
        mv = in.multiview_provider->guide(req);
        mv->validate(req);
    }

    StepReport report;
    SceneGradients total;
    total.resize(n);
    if (ip || mv) {
        for (std::size_t v = 0; v < kRingSize; ++v) {
            const Image combined = combine_residuals(ip ? &ip->residuals[v] : nullptr, mv ? &mv->residuals[v] : nullptr,
                                                     in.weights.image, in.weights.multiview);
            RenderGradients up;
            up.color = combined.data;
            // Expectation over the four views.
            for (float& g : up.color) g *= 0.25f;
            total.add(render_backward(scene, in.ring->cameras[v], ChannelSet::color_only(), up));
            if (ip) report.residual_norm_image += residual_norm(ip->residuals[v]) / kRingSize;
            if (mv) report.residual_norm_multiview += residual_norm(mv->residuals[v]) / kRingSize;
        }
    }
    report.grad_norm = total.mean2d_norm;

    const LearningRates& lr = config.lr;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = gate[i];
        if (g <= 0.0) continue;
        const bool touched = !total.positions[i].isZero() || !total.log_scales[i].isZero() ||
                             !total.rotations[i].isZero() || !total.colors[i].isZero() || total.opacity_logits[i] != 0.0;
        if (!touched) continue; // not visible in any view this step
        adam_row(state.position, i, scene.positions[i].data(), total.positions[i].data(), lr.position, g);
        adam_row(state.log_scale, i, scene.log_scales[i].data(), total.log_scales[i].data(), lr.log_scale, g);
        adam_row(state.rotation, i, scene.rotations[i].data(), total.rotations[i].data(), lr.rotation, g);
        adam_row(state.color, i, scene.colors[i].data(), total.colors[i].data(), lr.color, g);
        adam_row(state.opacity, i, &scene.opacity_logits[i], &total.opacity_logits[i], lr.opacity, g);
        const float qn = scene.rotations[i].norm();
        if (!(qn > 0.0f) || !std::isfinite(qn)) throw InvariantError("rotation collapsed during the update");
        scene.rotations[i] /= qn;
    }
    return report;
}

// ---------------------------------------------------------------- edit loop

std::string edit_log_csv(const std::vector<EditLogRow>& rows) {
    std::string out = "step,lambda_ip,lambda_mv,t,residual_norm_ip,residual_norm_mv,gaussians\n";
    for (const auto& r : rows) {
        out += std::to_string(r.step) + "," + format_double(r.weights.image) + "," + format_double(r.weights.multiview) +
               "," + format_double(r.noise_level) + "," + format_double(r.residual_norm_image) + "," +
               format_double(r.residual_norm_multiview) + "," + std::to_string(r.gaussians) + "\n";
    }
    return out;
}

EditResult edit(const GaussianScene& input, const QueryEmbedding& query, const EditConfig& config,
                std::span<const Camera> dataset_cameras, GuidanceProvider& image_provider,
                GuidanceProvider& multiview_provider, const EditHooks& hooks) {
    config.validate();
    input.validate();
    EditResult result;
    result.retrieval = retrieve(input, query, config.tau);
    if (result.retrieval.member_indices.empty())
        throw ValidationError("query matched no Gaussians at tau = " + format_double(config.tau));
    const ObjectBox box = *result.retrieval.box;

    result.scene = input;
    result.gate = score_gates(result.retrieval.scores, config);
    result.origin.resize(input.size());
    std::iota(result.origin.begin(), result.origin.end(), 0LL);
    const GaussianScene& snapshot = input;
    GaussianScene& scene = result.scene;
    CsdState state(scene.size());

    const fs::path run_dir = hooks.run_dir;
    if (!run_dir.empty()) {
        fs::create_directories(run_dir);
        std::ofstream(run_dir / "config.txt") << config.to_config().to_text();
    }

    std::optional<ViewRing> cached_ring;
    std::array<Image, kRingSize> originals;
    std::array<Image, kRingSize> last_renders;
    for (int step = 0; step < config.steps; ++step) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(step)));
        const std::uint64_t ring_seed = rng.next_u64();
        const double t = rng.uniform(config.t_min, config.t_max);
        const std::uint64_t noise_seed = rng.next_u64();

        const ViewRing ring = select_views(box, dataset_cameras, ring_seed);
        bool same = cached_ring.has_value();
        for (std::size_t v = 0; same && v < kRingSize; ++v)
            same = pose_of(cached_ring->cameras[v]) == pose_of(ring.cameras[v]);
        if (!same) {
            for (std::size_t v = 0; v < kRingSize; ++v) originals[v] = render_image(snapshot, ring.cameras[v]);
            cached_ring = ring;
        }

        StepInputs in;
        in.ring = &ring;
        in.originals = &originals;
        in.image_provider = &image_provider;
        in.multiview_provider = &multiview_provider;
        in.weights = weight_schedule(static_cast<double>(step) / config.steps, config);
        in.noise_level = static_cast<float>(t);
        in.noise_seed = noise_seed;
        const StepReport report = csd_step(scene, state, result.gate, in, config);

        for (std::size_t i = 0; i < scene.size(); ++i)
            if (report.grad_norm[i] > 0.0) {
                state.grad_accum[i] += report.grad_norm[i];
                ++state.grad_steps[i];
            }
        result.log.push_back({step, in.weights, in.noise_level, report.residual_norm_image,
                              report.residual_norm_multiview, scene.size()});

        const int done = step + 1;
        if (config.densify_interval > 0 && done % config.densify_interval == 0 && done < config.steps) {
            std::vector<double> mean_grad(scene.size(), 0.0);
            for (std::size_t i = 0; i < scene.size(); ++i)
                if (state.grad_steps[i] > 0) mean_grad[i] = state.grad_accum[i] / state.grad_steps[i];
            const DensifyResult d = densify_and_prune(scene, result.gate, mean_grad, config,
                                                      derive_seed(derive_seed(config.seed, kDensifyStream),
                                                                  static_cast<std::uint64_t>(step)));
            state.remap(d.source);
            std::vector<long long> origin(d.source.size());
            for (std::size_t k = 0; k < d.source.size(); ++k)
                origin[k] = d.source[k] >= 0 ? result.origin[static_cast<std::size_t>(d.source[k])] : -1;
            result.origin = std::move(origin);
            result.gate = d.gate;
        }
        if (!run_dir.empty() && config.checkpoint_interval > 0 &&
            (done % config.checkpoint_interval == 0 || done == config.steps)) {
            if (done % config.checkpoint_interval == 0) {
                fs::create_directories(run_dir / "checkpoints");
                save_scene(scene, (run_dir / "checkpoints" / (step_name(done) + ".ply")).string());
            }
            for (std::size_t v = 0; v < kRingSize; ++v) last_renders[v] = render_image(scene, ring.cameras[v]);
            write_previews(last_renders, run_dir / "previews", done);
        }
        if (hooks.on_step) hooks.on_step(step, scene);
    }
    if (!run_dir.empty()) std::ofstream(run_dir / "log.csv", std::ios::binary) << edit_log_csv(result.log);
    return result;
}

// ---------------------------------------------------------------- deletion

DeleteResult delete_object(const GaussianScene& scene, const QueryEmbedding& query, double tau,
                           std::span<const Camera> cameras) {
    const RetrievalResult r = retrieve(scene, query, tau);
    if (r.member_indices.empty()) throw ValidationError("query matched no Gaussians at tau = " + format_double(tau));
    DeleteResult out;
    out.removed = r.member_indices;
    std::vector<std::size_t> keep;
    std::size_t m = 0;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (m < out.removed.size() && out.removed[m] == i) {
            ++m;
            continue;
        }
        keep.push_back(i);
    }
    out.scene = scene.select(keep);
    for (const auto& cam : cameras) {
        const RenderOutput before = render(scene, cam, ChannelSet{false, false});
        const RenderOutput after = render(out.scene, cam, ChannelSet{false, false});
        MaskSet set;
        set.height = cam.height;
        set.width = cam.width;
        std::vector<std::uint8_t> hole(before.alpha.size());
        for (std::size_t p = 0; p < hole.size(); ++p) hole[p] = before.alpha[p] >= 0.5f && after.alpha[p] < 0.5f;
        set.masks.push_back(std::move(hole));
        out.holes.push_back(std::move(set));
    }
    return out;
}

} // namespace tgr
