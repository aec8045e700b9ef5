#include "cli.hpp"

#include "tgr/camera.hpp"
#include "tgr/config.hpp"
#include "tgr/containers.hpp"
#include "tgr/csd.hpp"
#include "tgr/error.hpp"
#include "tgr/features.hpp"
#include "tgr/guidance.hpp"
#include "tgr/image.hpp"
#include "tgr/ply.hpp"
#include "tgr/rasterizer.hpp"
#include "tgr/remote.hpp"
#include "tgr/retrieval.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

namespace tgr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;
constexpr const char* kManifestName = "tgr_runs.jsonl";
constexpr const char* kFeatureManifest = "manifest.json";

std::uint64_t fnv1a_update(std::uint64_t h, std::string_view bytes) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

std::string hex(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << v;
    return ss.str();
}

std::string file_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

/// Hash of a file, or of every regular file below a directory in path order.
std::string hash_path(const fs::path& p) {
    if (fs::is_regular_file(p)) return hex(fnv1a(file_text(p)));
    if (!fs::is_directory(p)) return "missing";
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::uint64_t h = kFnvOffset;
    for (const auto& f : files) {
        h = fnv1a_update(h, fs::relative(f, p).generic_string());
        h = fnv1a_update(h, std::string_view("\0", 1));
        h = fnv1a_update(h, file_text(f));
    }
    return hex(h);
}

/// One manifest record per run, appended as a JSON line.
struct RunRecord {
    std::string command;
    json config = json::object();
    json inputs = json::object();
    json outputs = json::array();
    fs::path dir = ".";

    void input(const std::string& p) {
        if (!p.empty()) inputs[p] = hash_path(p);
    }
    void output(const fs::path& p) { outputs.push_back(p.generic_string()); }
};

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw ValidationError("cannot create directory " + p.string() + ": " + ec.message());
}

fs::path parent_or_cwd(const fs::path& file) {
    return file.has_parent_path() ? file.parent_path() : fs::path(".");
}

const Camera& find_camera(const std::vector<Camera>& cams, const std::string& id) {
    for (const auto& c : cams)
        if (c.id == id) return c;
    throw ValidationError("no camera with id '" + id + "'");
}

std::vector<float> parse_floats(const std::string& text) {
    std::vector<float> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stof(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError("bad number '" + item + "' in '" + text + "'");
        }
    }
    return v;
}

/// Provider forms: null, mock, tint:r,g,b[,strength], files:<dir>, remote:<host:port>.
std::unique_ptr<GuidanceProvider> make_provider(const std::string& text, ProviderRole role) {
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    if (kind == "null") return std::make_unique<NullProvider>();
    if (kind == "mock") return PhotometricProvider::identity();
    if (kind == "tint") {
        const auto v = parse_floats(arg);
        if (v.size() != 3 && v.size() != 4) throw ValidationError("tint needs r,g,b[,strength]");
        return PhotometricProvider::tint({v[0], v[1], v[2]}, v.size() == 4 ? v[3] : 1.0f);
    }
    if (kind == "files") return FileProvider::load(arg);
    if (kind == "remote") {
        RemoteOptions opts;
        opts.role = role;
        return RemoteProvider::connect(Endpoint::parse(arg), opts);
    }
    throw ValidationError("unknown provider '" + text + "' (expected null, mock, tint:, files: or remote:)");
}

std::vector<Camera> cameras_or_orbit(const std::string& path, const GaussianScene& scene, const QueryEmbedding& query,
                                     double tau) {
    if (!path.empty()) return load_cameras(path);
    const auto r = retrieve(scene, query, tau);
    return r.box ? orbit_cameras(*r.box) : std::vector<Camera>{};
}

// ---------------------------------------------------------------- commands

struct PreprocessArgs {
    std::string features, masks, out;
    int pca_dim = kPcaDim;
};

void preprocess_features(const PreprocessArgs& a, std::uint64_t seed, RunRecord& rec, std::ostream& out) {
    rec.input(a.features);
    rec.input(a.masks);
    rec.config["pca_dim"] = a.pca_dim;
    const fs::path fdir(a.features), mdir(a.masks), odir(a.out);
    const fs::path manifest_path = fdir / kFeatureManifest;
    if (!fs::exists(manifest_path)) throw ValidationError("missing feature manifest " + manifest_path.string());
    json manifest;
    try {
        manifest = json::parse(file_text(manifest_path));
    } catch (const json::exception& e) {
        throw ParseError(manifest_path.string() + ": " + e.what());
    }
    if (!manifest.contains("views") || !manifest["views"].is_array() || manifest["views"].empty())
        throw ValidationError(manifest_path.string() + ": no views listed");

    std::vector<FeatureMap> maps;
    std::vector<MaskSet> masks;
    std::vector<std::string> stems;
    for (const auto& v : manifest["views"]) {
        const std::string file = v.at("feature").get<std::string>();
        const std::string stem = fs::path(file).stem().string();
        const fs::path mask_path = mdir / (stem + ".tgrm");
        if (!fs::exists(mask_path))
            throw ValidationError("no mask file for image '" + stem + "' (expected " + mask_path.string() + ")");
        maps.push_back(read_feature_map((fdir / file).string()));
        maps.back().source_camera_id = v.value("camera_id", stem);
        if (maps.back().dim != maps.front().dim)
            throw ValidationError("feature dimension mismatch: '" + stem + "' has " + std::to_string(maps.back().dim) +
                                  ", expected " + std::to_string(maps.front().dim));
        masks.push_back(read_mask_set(mask_path.string()));
        stems.push_back(stem);
    }

    const auto samples = sample_pixels(maps, kPcaSampleCap, seed);
    const PcaBasis basis = fit_pca(samples, maps.front().dim, a.pca_dim);
    ensure_dir(odir);
    write_pca_basis(basis, (odir / "pca.tgrp").string());
    rec.output(odir / "pca.tgrp");
    json out_manifest = manifest;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const FeatureMap refined = refine_with_masks(project_features(maps[i], basis), masks[i]);
        const fs::path p = odir / (stems[i] + ".tgrf");
        write_feature_map(refined, p.string());
        rec.output(p);
        out_manifest["views"][i]["feature"] = stems[i] + ".tgrf";
    }
    std::ofstream(odir / kFeatureManifest) << out_manifest.dump(2) << '\n';
    rec.output(odir / kFeatureManifest);
    out << "maps " << maps.size() << "\nrank " << basis.rank << "\n";
}

struct TrainArgs {
    std::string scene, features, out, cameras;
    LanguageTrainingConfig cfg;
};

void train_language(const TrainArgs& a, std::uint64_t seed, RunRecord& rec, std::ostream& out) {
    rec.input(a.scene);
    rec.input(a.features);
    rec.input(a.cameras);
    rec.config["epochs"] = a.cfg.epochs;
    rec.config["learning_rate"] = a.cfg.learning_rate;
    rec.config["final_learning_rate"] = a.cfg.final_learning_rate;
    const fs::path fdir(a.features);
    const fs::path manifest_path = fdir / kFeatureManifest;
    if (!fs::exists(manifest_path)) throw ValidationError("missing feature manifest " + manifest_path.string());
    const json manifest = json::parse(file_text(manifest_path), nullptr, false);
    if (manifest.is_discarded() || !manifest.contains("views"))
        throw ParseError(manifest_path.string() + ": expected an object with a views list");
    std::vector<Camera> cams;
    if (!a.cameras.empty()) cams = load_cameras(a.cameras);
    else if (manifest.contains("cameras")) cams = load_cameras(manifest_path.string());
    else throw ValidationError("missing camera manifest: pass --cameras or list cameras in " + manifest_path.string());

    std::vector<FeatureView> views;
    for (const auto& v : manifest["views"]) {
        FeatureView fv;
        fv.camera = find_camera(cams, v.at("camera_id").get<std::string>());
        fv.features = read_feature_map((fdir / v.at("feature").get<std::string>()).string());
        views.push_back(std::move(fv));
    }
    LanguageTrainingConfig cfg = a.cfg;
    cfg.shuffle_seed = seed;
    const auto result = train_language_embeddings(load_scene(a.scene), views, cfg);
    save_scene(result.scene, a.out);
    rec.output(a.out);
    out << "epochs " << result.epoch_loss.size() << "\nfinal_loss "
        << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << "\n";
}

struct QueryArgs {
    std::string scene, query, heatmap, cameras, out = ".";
    double tau = kDefaultTau;
};

void query_cmd(const QueryArgs& a, RunRecord& rec, std::ostream& out) {
    rec.input(a.scene);
    rec.input(a.query);
    rec.config["tau"] = a.tau;
    const GaussianScene scene = load_scene(a.scene);
    const QueryEmbedding q = read_query(a.query);
    const auto r = retrieve(scene, q, a.tau);
    out << "members " << r.member_indices.size() << "\n";
    if (r.box) {
        const auto& c = r.box->center;
        const auto& h = r.box->half_extents;
        out << "box " << c.x() << ' ' << c.y() << ' ' << c.z() << ' ' << h.x() << ' ' << h.y() << ' ' << h.z() << "\n";
    } else {
        out << "box none\n";
    }
    if (a.heatmap.empty()) return;
    if (a.cameras.empty()) throw ValidationError("--heatmap needs --cameras");
    rec.input(a.cameras);
    const auto cams = load_cameras(a.cameras);
    const RelevanceMap map = render_relevance_map(scene, find_camera(cams, a.heatmap), q);
    const fs::path dir(a.out);
    ensure_dir(dir);
    const fs::path raw = dir / (a.heatmap + "_relevance.tgrf");
    const fs::path png = dir / (a.heatmap + "_relevance.png");
    write_relevance_map(map, raw.string());
    Image scalar(map.width, map.height, 1);
    scalar.data = map.scores;
    write_png(colorize(scalar, 0.0f, 1.0f), png.string());
    rec.output(raw);
    rec.output(png);
    out << "argmax " << map.argmax_x << ' ' << map.argmax_y << "\nmax_score " << map.max_score << "\n";
}

struct EditArgs {
    std::string scene, query, config, cameras, out, provider = "mock", mv_provider = "null";
    std::vector<std::string> sets;
};

void edit_cmd(const EditArgs& a, std::optional<std::uint64_t> seed, RunRecord& rec, std::ostream& out) {
    rec.input(a.scene);
    rec.input(a.query);
    rec.input(a.config);
    rec.input(a.cameras);
    KeyValueConfig kv = a.config.empty() ? KeyValueConfig{} : KeyValueConfig::parse_file(a.config);
    for (const auto& s : a.sets) kv.set_assignment(s);
    if (seed) kv.set("seed", std::to_string(*seed));
    const EditConfig cfg = EditConfig::from(kv);
    rec.config = cfg.to_config().values();
    rec.config["provider"] = a.provider;
    rec.config["mv_provider"] = a.mv_provider;

    const GaussianScene scene = load_scene(a.scene);
    const QueryEmbedding q = read_query(a.query);
    const auto cams = cameras_or_orbit(a.cameras, scene, q, cfg.tau);
    auto ip = make_provider(a.provider, ProviderRole::SingleView);
    auto mv = make_provider(a.mv_provider, ProviderRole::MultiView);
    const fs::path dir(a.out);
    ensure_dir(dir);
    const auto result = edit(scene, q, cfg, cams, *ip, *mv, {dir.string(), {}});
    save_scene(result.scene, (dir / "edited.ply").string());
    rec.output(dir / "edited.ply");
    rec.output(dir / "log.csv");
    rec.output(dir / "config.txt");
    out << "members " << result.retrieval.member_indices.size() << "\ngaussians " << scene.size() << " -> "
        << result.scene.size() << "\nsteps " << result.log.size() << "\n";
}

struct DeleteArgs {
    std::string scene, query, cameras, out;
    double tau = kDefaultTau;
};

void delete_cmd(const DeleteArgs& a, RunRecord& rec, std::ostream& out) {
    rec.input(a.scene);
    rec.input(a.query);
    rec.input(a.cameras);
    rec.config["tau"] = a.tau;
    const GaussianScene scene = load_scene(a.scene);
    const QueryEmbedding q = read_query(a.query);
    const auto cams = cameras_or_orbit(a.cameras, scene, q, a.tau);
    const auto result = delete_object(scene, q, a.tau, cams);
    const fs::path dir(a.out);
    ensure_dir(dir);
    save_scene(result.scene, (dir / "scene.ply").string());
    rec.output(dir / "scene.ply");
    for (std::size_t k = 0; k < cams.size(); ++k) {
        const fs::path p = dir / (cams[k].id + "_hole.tgrm");
        write_mask_set(result.holes[k], p.string());
        rec.output(p);
    }
    out << "removed " << result.removed.size() << "\nremaining " << result.scene.size() << "\n";
}

struct EvalArgs {
    std::string maps, gt;
};

void eval_loc(const EvalArgs& a, RunRecord& rec, std::ostream& out) {
    rec.input(a.maps);
    rec.input(a.gt);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.maps))
        if (e.is_regular_file() && e.path().extension() == ".tgrf") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<LocalizationView> views;
    for (const auto& f : files) {
        const std::string stem = f.stem().string();
        const fs::path gt = fs::path(a.gt) / (stem + ".txt");
        if (!fs::exists(gt)) throw ValidationError("no ground-truth boxes for map '" + stem + "'");
        const RelevanceMap map = read_relevance_map(f.string());
        views.push_back({stem, map.argmax_x, map.argmax_y, read_boxes(gt.string())});
    }
    const auto report = evaluate_localization(views);
    rec.config["correct"] = report.correct;
    rec.config["total"] = report.total;
    out << format_accuracy(report.accuracy) << "\n";
}

struct RenderArgs {
    std::string scene, cameras, camera, out, features;
};

void render_cmd(const RenderArgs& a, RunRecord& rec, std::ostream& out) {
    rec.input(a.scene);
    rec.input(a.cameras);
    const GaussianScene scene = load_scene(a.scene);
    const auto cams = load_cameras(a.cameras);
    if (cams.empty()) throw ValidationError(a.cameras + ": no cameras");
    const Camera& cam = a.camera.empty() ? cams.front() : find_camera(cams, a.camera);
    ensure_dir(parent_or_cwd(a.out));
    write_png(render_image(scene, cam), a.out);
    rec.output(a.out);
    if (!a.features.empty()) {
        const RenderOutput r = render(scene, cam, ChannelSet::feature_only());
        FeatureMap fm(r.height, r.width, static_cast<int>(kLangDim));
        fm.data = r.feature;
        fm.source_camera_id = cam.id;
        write_feature_map(fm, a.features);
        rec.output(a.features);
    }
    out << "camera " << cam.id << "\n";
}

struct ViewsArgs {
    std::string scene, query, cameras, out;
    double tau = kDefaultTau;
};

void views_cmd(const ViewsArgs& a, std::uint64_t seed, RunRecord& rec, std::ostream& out) {
    rec.input(a.scene);
    rec.input(a.query);
    rec.input(a.cameras);
    const GaussianScene scene = load_scene(a.scene);
    const auto r = retrieve(scene, read_query(a.query), a.tau);
    if (!r.box) throw ValidationError("query matched no Gaussians at tau = " + format_double(a.tau));
    const auto ring = select_views(*r.box, load_cameras(a.cameras), seed);
    save_cameras({ring.cameras.begin(), ring.cameras.end()}, a.out);
    rec.output(a.out);
    out << "mode " << (ring.mode == RingMode::FullCircle ? "full_circle" : "bounded_arc") << "\nazimuths";
    for (double az : ring.azimuths) out << ' ' << az;
    out << "\n";
}

void append_manifest(const fs::path& path, const json& record, std::ostream& err) {
    std::ofstream f(path, std::ios::app);
    if (!f) {
        err << "warning: cannot append run manifest " << path << "\n";
        return;
    }
    f << record.dump() << '\n';
}

} // namespace

std::uint64_t fnv1a(std::string_view bytes) { return fnv1a_update(kFnvOffset, bytes); }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Language-embedded Gaussian splatting: features, retrieval and guided editing"};
    app.require_subcommand(1);
    app.fallthrough();
    std::uint64_t seed = 0;
    std::string manifest_override;
    app.add_option("--manifest", manifest_override, "Run manifest file (JSON lines, appended)");
    auto* seed_opt = app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();

    PreprocessArgs pre;
    auto* c_pre = app.add_subcommand("preprocess-features", "PCA-reduce and mask-refine raw feature maps");
    c_pre->add_option("--features", pre.features, "Raw feature directory with manifest.json")->required();
    c_pre->add_option("--masks", pre.masks, "Mask directory, one <stem>.tgrm per map")->required();
    c_pre->add_option("--out", pre.out, "Output directory")->required();
    c_pre->add_option("--pca-dim", pre.pca_dim, "Reduced dimension")->capture_default_str();

    TrainArgs train;
    auto* c_train = app.add_subcommand("train-language", "Fit per-Gaussian language embeddings");
    c_train->add_option("--scene", train.scene, "Input PLY")->required()->check(CLI::ExistingFile);
    c_train->add_option("--features", train.features, "Refined feature directory")->required();
    c_train->add_option("--out", train.out, "Output PLY")->required();
    c_train->add_option("--cameras", train.cameras, "Camera JSON (default: cameras in the feature manifest)");
    c_train->add_option("--epochs", train.cfg.epochs)->capture_default_str();
    c_train->add_option("--lr", train.cfg.learning_rate)->capture_default_str();
    c_train->add_option("--final-lr", train.cfg.final_learning_rate)->capture_default_str();

    QueryArgs query;
    auto* c_query = app.add_subcommand("query", "Retrieve Gaussians matching a text embedding");
    c_query->add_option("--scene", query.scene)->required()->check(CLI::ExistingFile);
    c_query->add_option("--query", query.query, "TGRQ file")->required()->check(CLI::ExistingFile);
    c_query->add_option("--tau", query.tau, "Strict cosine threshold")->capture_default_str();
    c_query->add_option("--heatmap", query.heatmap, "Camera id for a relevance heatmap");
    c_query->add_option("--cameras", query.cameras, "Camera JSON");
    c_query->add_option("--out", query.out, "Heatmap directory")->capture_default_str();

    EditArgs ed;
    auto* c_edit = app.add_subcommand("edit", "Score-distillation edit of the retrieved object");
    c_edit->add_option("--scene", ed.scene)->required()->check(CLI::ExistingFile);
    c_edit->add_option("--query", ed.query)->required()->check(CLI::ExistingFile);
    c_edit->add_option("--config", ed.config, "key = value edit config");
    c_edit->add_option("--set", ed.sets, "Config override key=value (repeatable)");
    c_edit->add_option("--provider", ed.provider, "null | mock | tint:r,g,b[,s] | files:dir | remote:host:port")
        ->capture_default_str();
    c_edit->add_option("--mv-provider", ed.mv_provider, "Multi-view provider, same forms")->capture_default_str();
    c_edit->add_option("--cameras", ed.cameras, "Dataset camera JSON (default: synthetic orbit)");
    c_edit->add_option("--out", ed.out, "Run directory")->required();

    DeleteArgs del;
    auto* c_del = app.add_subcommand("delete", "Remove the retrieved object and export hole masks");
    c_del->add_option("--scene", del.scene)->required()->check(CLI::ExistingFile);
    c_del->add_option("--query", del.query)->required()->check(CLI::ExistingFile);
    c_del->add_option("--tau", del.tau)->capture_default_str();
    c_del->add_option("--cameras", del.cameras, "Camera JSON (default: synthetic orbit)");
    c_del->add_option("--out", del.out, "Output directory")->required();

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval-loc", "Localization accuracy of relevance-map argmaxes");
    c_eval->add_option("--maps", ev.maps, "Directory of TGRF relevance maps")->required()->check(CLI::ExistingDirectory);
    c_eval->add_option("--gt", ev.gt, "Directory of <stem>.txt boxes")->required()->check(CLI::ExistingDirectory);

    RenderArgs ren;
    auto* c_render = app.add_subcommand("render", "Render one camera to PNG");
    c_render->add_option("--scene", ren.scene)->required()->check(CLI::ExistingFile);
    c_render->add_option("--cameras", ren.cameras)->required()->check(CLI::ExistingFile);
    c_render->add_option("--camera", ren.camera, "Camera id (default: first)");
    c_render->add_option("--out", ren.out, "PNG path")->required();
    c_render->add_option("--features", ren.features, "Optional TGRF path for the rendered language features");

    ViewsArgs vw;
    auto* c_views = app.add_subcommand("views", "Write the four editing views for a query");
    c_views->add_option("--scene", vw.scene)->required()->check(CLI::ExistingFile);
    c_views->add_option("--query", vw.query)->required()->check(CLI::ExistingFile);
    c_views->add_option("--cameras", vw.cameras)->required()->check(CLI::ExistingFile);
    c_views->add_option("--tau", vw.tau)->capture_default_str();
    c_views->add_option("--out", vw.out, "Camera JSON output")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }

    CLI::App* sub = app.get_subcommands().front();
    RunRecord rec;
    rec.command = sub->get_name();
    rec.config["seed"] = seed;
    std::function<void()> body;
    if (sub == c_pre) {
        rec.dir = pre.out;
        body = [&] { preprocess_features(pre, seed, rec, out); };
    } else if (sub == c_train) {
        rec.dir = parent_or_cwd(train.out);
        body = [&] { train_language(train, seed, rec, out); };
    } else if (sub == c_query) {
        rec.dir = query.heatmap.empty() ? fs::path(".") : fs::path(query.out);
        body = [&] { query_cmd(query, rec, out); };
    } else if (sub == c_edit) {
        rec.dir = ed.out;
        std::optional<std::uint64_t> s;
        if (seed_opt->count()) s = seed;
        body = [&, s] { edit_cmd(ed, s, rec, out); };
    } else if (sub == c_del) {
        rec.dir = del.out;
        body = [&] { delete_cmd(del, rec, out); };
    } else if (sub == c_eval) {
        body = [&] { eval_loc(ev, rec, out); };
    } else if (sub == c_render) {
        rec.dir = parent_or_cwd(ren.out);
        body = [&] { render_cmd(ren, rec, out); };
    } else {
        rec.dir = parent_or_cwd(vw.out);
        body = [&] { views_cmd(vw, seed, rec, out); };
    }

    const auto t0 = std::chrono::steady_clock::now();
    int code = kExitOk;
    std::string message;
    try {
        body();
    } catch (const ValidationError& e) {
        code = kExitValidation;
        message = e.what();
    } catch (const ServiceError& e) {
        code = kExitService;
        message = e.what();
    } catch (const InvariantError& e) {
        code = kExitInvariant;
        message = e.what();
    } catch (const fs::filesystem_error& e) {
        code = kExitValidation;
        message = e.what();
    } catch (const nlohmann::json::exception& e) {
        code = kExitValidation;
        message = e.what();
    } catch (const std::exception& e) {
        code = kExitInvariant;
        message = e.what();
    }
    if (code != kExitOk) err << "error: " << message << "\n";
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    json record{{"command", rec.command},
                {"argv", args},
                {"config", rec.config},
                {"inputs", rec.inputs},
                {"outputs", rec.outputs},
                {"timings", {{"total_ms", ms}}},
                {"tool_version", kToolVersion},
                {"exit_code", code}};
    if (!message.empty()) record["error"] = message;
    fs::path manifest = manifest_override.empty() ? rec.dir / kManifestName : fs::path(manifest_override);
    std::error_code ec;
    if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path(), ec);
    append_manifest(manifest, record, err);
    return code;
}

} // namespace tgr::cli
