// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

#include "cli.hpp"
#include "tgr/csd.hpp"
#include "tgr/features.hpp"
#include "tgr/ply.hpp"
#include "tgr/rasterizer.hpp"
#include "tgr/remote.hpp"
#include "tgr/retrieval.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>

using namespace tgr;
using namespace tgr::test;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

float max_abs(const std::vector<float>& a, const std::vector<float>& b) {
    float m = a.size() == b.size() ? 0.0f : INFINITY;
    for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(const std::vector<std::string>& args, std::string* out = nullptr) {
    std::ostringstream o, e;
    const int code = cli::run(args, o, e);
    if (out) *out = o.str();
    return code;
}

Outcome rasterizer_oracle() {
    Rng rng(1001);
    const auto t0 = std::chrono::steady_clock::now();
    float worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const GaussianScene s = random_scene(rng, 1 + rng.below(200));
        const Camera cam = front_camera(32, 32);
        const auto a = render(s, cam, ChannelSet::all());
        const auto b = render_reference(s, cam, ChannelSet::all());
        worst = std::max({worst, max_abs(a.color, b.color), max_abs(a.feature, b.feature), max_abs(a.alpha, b.alpha)});
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-5f && secs < 60.0,
            "max deviation " + fmt("%.3g", worst) + " over 100 scenes in " + fmt("%.1f", secs) + " s"};
}

Outcome gradient_correctness() {
    Rng rng(1002);
    double worst = 0;
    std::string worst_class;
    for (int trial = 0; trial < 20; ++trial) {
        const GaussianScene s = random_scene(rng, 2 + rng.below(10));
        const Camera cam = front_camera(16, 16);
        const auto up = random_upstream(rng, cam, ChannelSet::all());
        const auto g = render_backward(s, cam, ChannelSet::all(), up);
        for (ParamClass c : kAllParamClasses) {
            const double e = finite_difference_check(s, cam, ChannelSet::all(), up, g, c, rng).relative_error();
            if (e > worst) {
                worst = e;
                worst_class = param_class_name(c);
            }
        }
    }
    return {worst < 1e-3, "worst relative error " + fmt("%.3g", worst) + " (" + worst_class + ") over 20 configs"};
}

Outcome weight_law() {
    Rng rng(1003);
    double worst = 0;
    std::size_t negative = 0, pixels = 0;
    for (int scene_index = 0; scene_index < 50; ++scene_index) {
        const GaussianScene s = random_scene(rng, 1 + rng.below(150));
        const Camera cam = front_camera(32, 32);
        const auto out = render(s, cam, ChannelSet::color_only());
        for (int k = 0; k < 20; ++k, ++pixels) {
            const int x = static_cast<int>(rng.below(32)), y = static_cast<int>(rng.below(32));
            double sum = 0;
            for (const auto& t : blend_terms(s, cam, x, y)) {
                negative += t.weight < 0.0f;
                sum += t.weight;
            }
            worst = std::max(worst, std::abs(sum - out.alpha[out.pixel(x, y)]));
        }
    }
    return {worst <= 1e-6 && negative == 0,
            std::to_string(pixels) + " pixels, max |sum w - alpha| " + fmt("%.3g", worst) + ", negative weights " +
                std::to_string(negative)};
}

Outcome retrieval_exactness() {
    const auto f = two_cluster_fixture();
    const auto r = retrieve(f.scene, QueryEmbedding::make(f.q1, "left"), 0.5);
    bool exact = r.member_indices.size() == 50;
    for (std::size_t k = 0; exact && k < 50; ++k) exact = r.member_indices[k] == k;
    Rng rng(1004);
    std::size_t violations = 0;
    for (int draw = 0; draw < 50; ++draw) {
        const GaussianScene s = random_scene(rng, 20 + rng.below(200));
        const auto q = QueryEmbedding::make(random_unit(rng), "q");
        double t1 = rng.uniform(-1, 1), t2 = rng.uniform(-1, 1);
        if (t1 > t2) std::swap(t1, t2);
        const auto lo = retrieve(s, q, t1), hi = retrieve(s, q, t2);
        for (std::size_t i : hi.member_indices)
            violations += !std::binary_search(lo.member_indices.begin(), lo.member_indices.end(), i);
    }
    return {exact && violations == 0, "two-cluster members " + std::to_string(r.member_indices.size()) +
                                          (exact ? " (exact set)" : " (wrong set)") + ", monotonicity violations " +
                                          std::to_string(violations) + "/50 draws"};
}

Outcome localization_counting() {
    const fs::path root = temp_dir("accept_loc");
    fs::create_directories(root / "maps");
    fs::create_directories(root / "gt");
    Rng rng(1005);
    for (int k = 0; k < 100; ++k) {
        RelevanceMap m;
        m.width = m.height = 24;
        m.scores.resize(24 * 24);
        for (float& s : m.scores) s = static_cast<float>(rng.uniform(-1.0, 0.8));
        const int x = static_cast<int>(rng.below(24)), y = static_cast<int>(rng.below(24));
        m.scores[static_cast<std::size_t>(y * 24 + x)] = 0.95f;
        char name[32];
        std::snprintf(name, sizeof name, "map%03d", k);
        write_relevance_map(m, (root / "maps" / (std::string(name) + ".tgrf")).string());
        // In-box views get a box around the peak, the rest a box elsewhere.
        const int bx = k < 87 ? x : (x + 12) % 24;
        std::ofstream(root / "gt" / (std::string(name) + ".txt"))
            << "object " << std::max(bx - 1, 0) << ' ' << std::max(y - 1, 0) << ' ' << std::min(bx + 1, 23) << ' '
            << std::min(y + 1, 23) << "\n";
    }
    std::string out;
    const int code = run_cli({"--manifest", (root / "runs.jsonl").string(), "eval-loc", "--maps",
                              (root / "maps").string(), "--gt", (root / "gt").string()},
                             &out);
    if (!out.empty() && out.back() == '\n') out.pop_back();
    return {code == 0 && out == "0.870", "eval-loc printed \"" + out + "\" (exit " + std::to_string(code) + ")"};
}

Outcome schedule_constants() {
    const EditConfig c;
    const auto w0 = weight_schedule(0.0, c);
    bool ok = w0.image / w0.multiview == 2.0;
    std::size_t nonzero = 0;
    for (int k = 0; k <= 1000; ++k) {
        const double e = 0.75 + 0.25 * k / 1000.0;
        nonzero += weight_schedule(e, c).multiview != 0.0;
    }
    ok = ok && nonzero == 0;
    return {ok, "ratio at 0 = " + fmt("%.17g", w0.image / w0.multiview) + ", nonzero lambda_2 for e >= 0.75: " +
                    std::to_string(nonzero) + "/1001"};
}

Outcome frozen_background() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto o = run_red_tint_edit(300);
    const double secs = seconds_since(t0);
    const bool ok = o.frozen_changed == 0 && o.frozen_checked > 0 && o.halved_at > 0 && o.halved_at <= 300 &&
                    secs < 300.0;
    return {ok, std::to_string(o.frozen_checked) + " gate-zero Gaussians, " + std::to_string(o.frozen_changed) +
                    " changed; distance " + fmt("%.4f", o.initial_distance) + " -> " + fmt("%.4f", o.final_distance) +
                    ", halved at step " + std::to_string(o.halved_at) + ", " + fmt("%.1f", secs) + " s"};
}

/// Provider returning a fixed residual per view.
class FixedProvider final : public GuidanceProvider {
public:
    explicit FixedProvider(std::vector<Image> r) : residuals_(std::move(r)) {}
    GuidanceResponse guide(const GuidanceRequest&) override { return {residuals_}; }
    std::string name() const override { return "fixed"; }

private:
    std::vector<Image> residuals_;
};

Outcome csd_linearity() {
    const auto f = two_object_fixture();
    const auto r = retrieve(f.scene, query_a(f), 0.5);
    const ViewRing ring = select_views(*r.box, f.cameras, 1);
    std::array<Image, kRingSize> originals;
    for (std::size_t v = 0; v < kRingSize; ++v) originals[v] = render_image(f.scene, ring.cameras[v]);
    const auto gate = score_gates(r.scores, EditConfig{});
    Rng rng(1008);
    std::size_t mismatches = 0;
    const int trials = 10;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<Image> rip, rmv, combined;
        for (const auto& cam : ring.cameras) {
            Image a(cam.width, cam.height, 3), b(cam.width, cam.height, 3);
            for (float& x : a.data) x = static_cast<float>(rng.uniform(-1, 1));
            for (float& x : b.data) x = static_cast<float>(rng.uniform(-1, 1));
            rip.push_back(a);
            rmv.push_back(b);
        }
        const double l1 = rng.uniform(0.5, 1.5), l2 = rng.uniform(0.0, 0.5);
        for (std::size_t v = 0; v < kRingSize; ++v) {
            Image c = rip[v];
            for (std::size_t k = 0; k < c.data.size(); ++k)
                c.data[k] = static_cast<float>(l1 * rip[v].data[k] + l2 * static_cast<double>(rmv[v].data[k]));
            combined.push_back(c);
        }
        FixedProvider pip(rip), pmv(rmv), pc(combined);
        NullProvider null;
        auto inputs = [&](GuidanceProvider& a, GuidanceProvider& b, double w1, double w2) {
            StepInputs in;
            in.ring = &ring;
            in.originals = &originals;
            in.image_provider = &a;
            in.multiview_provider = &b;
            in.weights = {w1, w2};
            in.noise_level = 0.1f;
            in.noise_seed = static_cast<std::uint64_t>(trial);
            return in;
        };
        GaussianScene a = f.scene, b = f.scene;
        CsdState sa(a.size()), sb(b.size());
        csd_step(a, sa, gate, inputs(pip, pmv, l1, l2), EditConfig{});
        csd_step(b, sb, gate, inputs(pc, null, 1.0, 0.0), EditConfig{});
        mismatches += !a.bit_equal(b);
    }
    return {mismatches == 0, std::to_string(trials - mismatches) + "/" + std::to_string(trials) +
                                 " random steps bit-identical to the pre-combined residual"};
}

Outcome densification_law() {
    std::size_t count_violations = 0, lang_violations = 0, events = 0;
    Rng rng(1009);
    for (int event = 0; event < 40; ++event, ++events) {
        const std::size_t n = 20 + rng.below(800);
        GaussianScene s = random_scene(rng, n);
        std::vector<float> gate(n, 0.0f);
        std::size_t candidates = 0;
        for (float& g : gate)
            if (rng.uniform() < 0.7) {
                g = static_cast<float>(rng.uniform(0.05, 1.0));
                ++candidates;
            }
        std::vector<double> grad(n);
        for (double& g : grad) g = rng.uniform();
        const GaussianScene before = s;
        const auto d = densify_and_prune(s, gate, grad, EditConfig{}, static_cast<std::uint64_t>(event));
        const std::size_t expected = static_cast<std::size_t>(std::ceil(0.01 * static_cast<double>(candidates) - 1e-9));
        count_violations += d.densified.size() != expected;
        for (std::size_t k = 0; k < s.size(); ++k) {
            const auto child = s.lang_of(k);
            const auto parent = before.lang_of(d.parent[k]);
            lang_violations += std::memcmp(child.data(), parent.data(), child.size_bytes()) != 0;
        }
    }
    GaussianScene s = random_scene(rng, 250);
    std::vector<float> gate(250, 0.0f);
    for (std::size_t i = 0; i < 200; ++i) gate[i] = 1.0f;
    std::vector<double> grad(250, 0.5);
    EditConfig cfg;
    cfg.prune_opacity = 0.0;
    const auto d200 = densify_and_prune(s, gate, grad, cfg, 3);
    const bool ok = count_violations == 0 && lang_violations == 0 && d200.densified.size() == 2;
    return {ok, "count violations " + std::to_string(count_violations) + "/" + std::to_string(events) +
                    " events, lang mismatches " + std::to_string(lang_violations) + ", 200 candidates -> " +
                    std::to_string(d200.densified.size())};
}

Outcome determinism() {
    const fs::path root = temp_dir("accept_det");
    const auto f = two_object_fixture();
    save_scene(f.scene, (root / "s.ply").string());
    write_query(query_a(f), (root / "q.tgrq").string());
    save_cameras(f.cameras, (root / "cams.json").string());
    EditConfig cfg = toy_edit_config(60);
    cfg.densify_interval = 20;
    std::ofstream(root / "edit.cfg") << cfg.to_config().to_text();
    bool ok = true;
    std::string detail;
    for (const std::string provider : {"mock", "tint:1,0,0,0.6"}) {
        for (const char* run : {"a", "b"}) {
            const int code = run_cli({"--seed", "11", "edit", "--scene", (root / "s.ply").string(), "--query",
                                      (root / "q.tgrq").string(), "--config", (root / "edit.cfg").string(),
                                      "--cameras", (root / "cams.json").string(), "--provider", provider, "--out",
                                      (root / (provider.substr(0, 4) + run)).string()});
            ok = ok && code == 0;
        }
        const fs::path a = root / (provider.substr(0, 4) + "a"), b = root / (provider.substr(0, 4) + "b");
        const bool same_scene = slurp(a / "edited.ply") == slurp(b / "edited.ply") && !slurp(a / "edited.ply").empty();
        const bool same_log = slurp(a / "log.csv") == slurp(b / "log.csv") && !slurp(a / "log.csv").empty();
        ok = ok && same_scene && same_log;
        detail += (detail.empty() ? "" : ", ") + provider + ": scene " + (same_scene ? "identical" : "differs") +
                  ", log " + (same_log ? "identical" : "differs");
    }
    return {ok, detail};
}

Outcome wire_protocol() {
    Rng rng(1011);
    GuidanceRequest req;
    req.prompt = "turn it into gold";
    req.noise_level = 0.137f;
    req.noise_seed = rng.next_u64();
    for (auto& pose : req.poses)
        for (float& x : pose) x = static_cast<float>(rng.normal());
    for (std::size_t v = 0; v < kRingSize; ++v) {
        Image a(12, 9, 3), b(12, 9, 3);
        for (float& x : a.data) x = static_cast<float>(rng.uniform());
        for (float& x : b.data) x = static_cast<float>(rng.uniform());
        req.rendered_views.push_back(a);
        req.original_views.push_back(b);
    }
    req.config = {{"guidance_scale_image", "1.5"}, {"description", "golden statue"}};

    std::mutex mu;
    GuidanceRequest received;
    GuidanceResponse sent;
    LoopbackServer::Options opts;
    opts.handler = [&](const GuidanceRequest& r) {
        GuidanceResponse resp;
        for (const auto& img : r.rendered_views) {
            Image res = img;
            for (float& x : res.data) x = std::nextafter(x, 2.0f) * -0.5f;
            resp.residuals.push_back(res);
        }
        std::lock_guard lock(mu);
        received = r;
        sent = resp;
        return resp;
    };
    LoopbackServer server(opts);
    auto client = RemoteProvider::connect(server.endpoint());
    const GuidanceResponse got = client->guide(req);
    bool round_trip;
    {
        std::lock_guard lock(mu);
        round_trip = received == req && got == sent;
    }
    client.reset();

    std::string code = "none";
    RemoteOptions bad;
    bad.version = static_cast<std::uint16_t>(wire::kVersion + 1);
    try {
        RemoteProvider::connect(server.endpoint(), bad);
    } catch (const ProtocolError& e) {
        code = std::to_string(static_cast<int>(e.code()));
    }
    const std::string expected = std::to_string(static_cast<int>(ProtocolErrorCode::VersionMismatch));
    return {round_trip && code == expected, std::string("request/response round trip ") +
                                                (round_trip ? "bit-exact" : "differs") +
                                                ", version mismatch error code " + code + " (expected " + expected + ")"};
}

Outcome pca_properties() {
    Rng rng(1012);
    const int dim = 96, n = 3000;
    // Full-rank data for orthonormality and ordering.
    std::vector<float> full(static_cast<std::size_t>(n) * dim);
    for (std::size_t r = 0; r < static_cast<std::size_t>(n); ++r)
        for (int c = 0; c < dim; ++c) full[r * dim + c] = static_cast<float>(rng.normal() * (1.0 + 0.1 * c));
    const PcaBasis b = fit_pca(full, dim);
    Eigen::MatrixXd C(b.k, b.dim);
    for (int i = 0; i < b.k; ++i)
        for (int j = 0; j < b.dim; ++j) C(i, j) = b.component(i)[static_cast<std::size_t>(j)];
    const double ortho = (C * C.transpose() - Eigen::MatrixXd::Identity(b.k, b.k)).cwiseAbs().maxCoeff();
    bool ordered = true;
    for (int i = 1; i < b.k; ++i) ordered = ordered && b.explained_variance[i] <= b.explained_variance[i - 1];

    // Rank-2 data: two random directions plus an offset.
    std::vector<float> u = random_unit(rng, dim), v = random_unit(rng, dim), offset = random_unit(rng, dim);
    std::vector<float> rank2(static_cast<std::size_t>(n) * dim);
    for (std::size_t r = 0; r < static_cast<std::size_t>(n); ++r) {
        const double a = rng.normal() * 3, c = rng.normal();
        for (int k = 0; k < dim; ++k) rank2[r * dim + k] = static_cast<float>(offset[k] + a * u[k] + c * v[k]);
    }
    const PcaBasis b2 = fit_pca(rank2, dim);
    int significant = 0;
    for (float var : b2.explained_variance) significant += var > kPcaRankTolerance * b2.explained_variance[0];
    const bool ok = ortho < 1e-5 && ordered && b2.rank == 2 && significant == 2;
    return {ok, "orthonormality error " + fmt("%.3g", ortho) + ", variances " +
                    (ordered ? "non-increasing" : "out of order") + ", rank-2 input gives rank " +
                    std::to_string(b2.rank) + " with " + std::to_string(significant) + " non-negligible variances"};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"rasterizer matches brute-force reference", rasterizer_oracle},
        {"backward pass matches finite differences", gradient_correctness},
        {"blend weights sum to alpha", weight_law},
        {"retrieval exactness and threshold monotonicity", retrieval_exactness},
        {"localization counting prints 0.870", localization_counting},
        {"schedule constants", schedule_constants},
        {"frozen background under red-tint edit", frozen_background},
        {"score distillation step is linear in the residuals", csd_linearity},
        {"densification law", densification_law},
        {"identical edit runs are byte-identical", determinism},
        {"guidance wire protocol", wire_protocol},
        {"PCA properties", pca_properties},
    };
    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size()
              << " acceptance criteria passed" << std::endl;
    return failures == 0 ? 0 : 1;
}
