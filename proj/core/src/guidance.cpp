#include "tgr/guidance.hpp"

#include "tgr/error.hpp"
#include "tgr/random.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>

namespace tgr {

namespace {

bool bit_equal(const Image& a, const Image& b) {
    return a.same_shape(b) && a.data.size() == b.data.size() &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

bool bit_equal(const std::vector<Image>& a, const std::vector<Image>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!bit_equal(a[i], b[i])) return false;
    return true;
}

void check_finite(const Image& img, const char* what, std::size_t view) {
    for (float v : img.data)
        if (!std::isfinite(v)) throw ValidationError(std::string(what) + " " + std::to_string(view) + " has non-finite pixels");
}

GuidanceResponse photometric(const GuidanceRequest& request,
                             const std::function<Image(const GuidanceRequest&, std::size_t)>& target) {
    request.validate();
    GuidanceResponse out;
    for (std::size_t v = 0; v < kRingSize; ++v) {
        const Image& x = request.rendered_views[v];
        const Image goal = target(request, v);
        if (!goal.same_shape(x)) throw ServiceError("target image " + std::to_string(v) + " does not match the render");
        Image r(x.width, x.height, x.channels);
        for (std::size_t k = 0; k < r.data.size(); ++k) r.data[k] = x.data[k] - goal.data[k];
        out.residuals.push_back(std::move(r));
    }
    return out;
}

} // namespace

Pose pose_of(const Camera& camera) {
    Pose p{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) p[r * 3 + c] = static_cast<float>(camera.world_to_camera.rotation(r, c));
    for (int r = 0; r < 3; ++r) p[9 + r] = static_cast<float>(camera.world_to_camera.translation[r]);
    return p;
}

bool poses_match(const Pose& a, const Pose& b, float tolerance) {
    for (std::size_t k = 0; k < a.size(); ++k)
        if (!(std::abs(a[k] - b[k]) <= tolerance)) return false;
    return true;
}

void GuidanceRequest::validate() const {
    if (rendered_views.size() != kRingSize || original_views.size() != kRingSize)
        throw ValidationError("guidance requests carry exactly 4 rendered and 4 original views");
    if (!(noise_level >= static_cast<float>(kNoiseLevelMin) && noise_level <= static_cast<float>(kNoiseLevelMax)))
        throw ValidationError("noise level " + std::to_string(noise_level) + " outside [0.02, 0.2]");
    for (std::size_t v = 0; v < kRingSize; ++v) {
        const Image& x = rendered_views[v];
        if (x.channels != 3 || x.width <= 0 || x.height <= 0 || x.data.size() != x.pixel_count() * 3)
            throw ValidationError("rendered view " + std::to_string(v) + " is not a 3-channel image");
        if (!original_views[v].same_shape(x) || original_views[v].data.size() != x.data.size())
            throw ValidationError("original view " + std::to_string(v) + " does not match its render");
        check_finite(x, "rendered view", v);
        check_finite(original_views[v], "original view", v);
        for (float p : poses[v])
            if (!std::isfinite(p)) throw ValidationError("pose " + std::to_string(v) + " is not finite");
    }
}

bool GuidanceRequest::operator==(const GuidanceRequest& o) const {
    return prompt == o.prompt && std::memcmp(&noise_level, &o.noise_level, sizeof noise_level) == 0 &&
           noise_seed == o.noise_seed && std::memcmp(poses.data(), o.poses.data(), sizeof poses) == 0 &&
           bit_equal(rendered_views, o.rendered_views) && bit_equal(original_views, o.original_views) &&
           config == o.config;
}

void GuidanceResponse::validate(const GuidanceRequest& request) const {
    if (residuals.size() != request.rendered_views.size())
        throw ServiceError("provider returned " + std::to_string(residuals.size()) + " residuals for " +
                           std::to_string(request.rendered_views.size()) + " views");
    for (std::size_t v = 0; v < residuals.size(); ++v) {
        if (!residuals[v].same_shape(request.rendered_views[v]) ||
            residuals[v].data.size() != request.rendered_views[v].data.size())
            throw ServiceError("residual " + std::to_string(v) + " does not match its view");
        for (float x : residuals[v].data)
            if (!std::isfinite(x)) throw ServiceError("residual " + std::to_string(v) + " has non-finite values");
    }
}

bool GuidanceResponse::operator==(const GuidanceResponse& o) const { return bit_equal(residuals, o.residuals); }

Image add_noise(const Image& image, double t, std::uint64_t seed, double sigma_scale) {
    if (!(t >= kNoiseLevelMin && t <= kNoiseLevelMax))
        throw ValidationError("noise level " + std::to_string(t) + " outside [0.02, 0.2]");
    const double sigma = t * sigma_scale;
    Rng rng(seed);
    Image out = image;
    for (float& x : out.data) x = static_cast<float>(x + sigma * rng.normal());
    return out;
}

GuidanceResponse NullProvider::guide(const GuidanceRequest& request) {
    request.validate();
    GuidanceResponse out;
    for (const auto& x : request.rendered_views) out.residuals.emplace_back(x.width, x.height, x.channels, 0.0f);
    return out;
}

PhotometricProvider::PhotometricProvider(TargetFn target, std::string label)
    : target_(std::move(target)), label_(std::move(label)) {}

std::unique_ptr<PhotometricProvider> PhotometricProvider::tint(const std::array<float, 3>& color, float strength) {
    return std::make_unique<PhotometricProvider>(
        [color, strength](const GuidanceRequest& req, std::size_t v) {
            Image t = req.original_views[v];
            for (std::size_t p = 0; p < t.pixel_count(); ++p)
                for (int c = 0; c < 3; ++c) {
                    float& x = t.data[p * 3 + c];
                    x = (1.0f - strength) * x + strength * color[c];
                }
            return t;
        },
        "tint");
}

std::unique_ptr<PhotometricProvider> PhotometricProvider::identity() {
    return std::make_unique<PhotometricProvider>(
        [](const GuidanceRequest& req, std::size_t v) { return req.original_views[v]; }, "identity");
}

GuidanceResponse PhotometricProvider::guide(const GuidanceRequest& request) { return photometric(request, target_); }

FileProvider::FileProvider(std::vector<Target> targets, float pose_tolerance)
    : targets_(std::move(targets)), tolerance_(pose_tolerance) {
    if (targets_.empty()) throw ValidationError("file guidance needs at least one target");
    for (const auto& t : targets_)
        if (t.image.channels != 3 || t.image.width != t.camera.width || t.image.height != t.camera.height)
            throw ValidationError("target for camera '" + t.camera.id + "' does not match the camera size");
}

std::unique_ptr<FileProvider> FileProvider::load(const std::string& dir) {
    namespace fs = std::filesystem;
    const auto cams = load_cameras((fs::path(dir) / "cameras.json").string());
    std::vector<Target> targets;
    for (const auto& cam : cams) {
        const fs::path png = fs::path(dir) / (cam.id + ".png");
        if (!fs::exists(png)) throw ValidationError("missing target image " + png.string());
        Image img = read_png(png.string());
        if (img.channels == 1) {
            Image rgb(img.width, img.height, 3);
            for (std::size_t p = 0; p < img.pixel_count(); ++p)
                for (int c = 0; c < 3; ++c) rgb.data[p * 3 + c] = img.data[p];
            img = std::move(rgb);
        }
        targets.push_back({cam, std::move(img)});
    }
    return std::make_unique<FileProvider>(std::move(targets));
}

void FileProvider::save(const std::vector<Target>& targets, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<Camera> cams;
    for (const auto& t : targets) {
        cams.push_back(t.camera);
        write_png(t.image, (fs::path(dir) / (t.camera.id + ".png")).string());
    }
    save_cameras(cams, (fs::path(dir) / "cameras.json").string());
}

GuidanceResponse FileProvider::guide(const GuidanceRequest& request) {
    return photometric(request, [this](const GuidanceRequest& req, std::size_t v) -> Image {
        for (const auto& t : targets_)
            if (poses_match(pose_of(t.camera), req.poses[v], tolerance_)) return t.image;
        throw ServiceError("no target image matches the pose of view " + std::to_string(v));
    });
}

} // namespace tgr
