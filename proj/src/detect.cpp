#include "pmapcut/detect.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "json.hpp"

#include "pmapcut/error.hpp"
#include "pmapcut/rng.hpp"

namespace pmapcut {

// ---------------------------------------------------------------- proposals

std::vector<RectProposal> gen_proposals(const RgbImage& image, std::span<const int> scales, double stride_frac,
                                        std::span<const double> aspect_ratios)
{
    if (!(stride_frac > 0.0) || !std::isfinite(stride_frac))
        throw Error(ErrorCode::InvalidArgument, "stride_frac must be > 0");
    const int W = image.width(), H = image.height();
    std::vector<RectProposal> out;
    for (const int s : scales) {
        if (s < 1)
            throw Error(ErrorCode::InvalidArgument, "scales must be >= 1");
        if (s > std::min(W, H))
            throw Error(ErrorCode::ScaleTooLarge,
                        "scale " + std::to_string(s) + " exceeds the smaller image side " + std::to_string(std::min(W, H)));
        for (const double a : aspect_ratios) {
            if (!(a > 0.0) || !std::isfinite(a))
                throw Error(ErrorCode::InvalidArgument, "aspect ratios must be > 0");
            const int w = std::max(1, static_cast<int>(std::lround(s * std::sqrt(a))));
            const int h = std::max(1, static_cast<int>(std::lround(s / std::sqrt(a))));
            if (w > W || h > H)
                continue;
            const int sx = std::max(1, static_cast<int>(std::lround(stride_frac * w)));
            const int sy = std::max(1, static_cast<int>(std::lround(stride_frac * h)));
            for (int y = 0; y + h <= H; y += sy)
                for (int x = 0; x + w <= W; x += sx)
                    out.push_back(RectProposal{x, y, w, h, std::nullopt});
        }
    }
    return out;
}

std::vector<RectProposal> parse_proposals(std::string_view text)
{
    std::vector<RectProposal> out;
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        const std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos)
            continue;
        auto fail = [&](const std::string& why) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + why);
        };
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(e.what());
        }
        if (!j.is_object())
            fail("expected an object");
        RectProposal r;
        for (auto [key, field] : {std::pair{"x", &r.x}, {"y", &r.y}, {"w", &r.w}, {"h", &r.h}}) {
            if (!j.contains(key) || !j[key].is_number_integer())
                fail(std::string("missing or non-integer \"") + key + "\"");
            *field = j[key].get<int>();
        }
        if (!r.valid())
            fail("w and h must be >= 1");
        if (j.contains("confidence")) {
            if (!j["confidence"].is_number())
                fail("confidence must be a number");
            r.confidence = j["confidence"].get<double>();
        }
        out.push_back(r);
    }
    return out;
}

std::vector<RectProposal> load_proposals(const std::filesystem::path& path)
{
    const Bytes raw = read_file(path);
    return parse_proposals(std::string_view(reinterpret_cast<const char*>(raw.data()), raw.size()));
}

std::vector<bool> label_samples(std::span<const RectProposal> proposals, std::span<const RectProposal> gt, double thresh)
{
    std::vector<bool> out;
    out.reserve(proposals.size());
    for (const auto& p : proposals) {
        double best = 0.0;
        for (const auto& g : gt)
            best = std::max(best, rect_iou(p, g));
        out.push_back(best > thresh);
    }
    return out;
}

// ---------------------------------------------------------------- features

void HogConfig::validate() const
{
    if (cell_size < 1 || block_size < 1 || n_bins < 1 || patch_size < 1)
        throw Error(ErrorCode::InvalidArgument, "HoG sizes must be positive");
    if (patch_size % cell_size != 0)
        throw Error(ErrorCode::InvalidArgument, "patch size must be a multiple of the cell size");
    if (block_size > cells())
        throw Error(ErrorCode::InvalidArgument, "block does not fit in the cell grid");
    if (!(norm_eps >= 0.0) || !std::isfinite(norm_eps))
        throw Error(ErrorCode::InvalidArgument, "norm_eps must be >= 0");
}

int HogConfig::dimension() const
{
    const int blocks = cells() - block_size + 1;
    return blocks * blocks * block_size * block_size * n_bins;
}

Raster<double> resample_bilinear(const Raster<double>& src, int width, int height)
{
    if (width < 1 || height < 1 || src.size() == 0)
        throw Error(ErrorCode::InvalidArgument, "resampling needs non-empty source and target");
    const auto sh = static_cast<int>(src.rows()), sw = static_cast<int>(src.cols());
    Raster<double> out(height, width);
    const double fy = static_cast<double>(sh) / height, fx = static_cast<double>(sw) / width;
    for (int y = 0; y < height; ++y) {
        const double v = std::clamp((y + 0.5) * fy - 0.5, 0.0, sh - 1.0);
        const int y0 = static_cast<int>(v), y1 = std::min(y0 + 1, sh - 1);
        const double ty = v - y0;
        for (int x = 0; x < width; ++x) {
            const double u = std::clamp((x + 0.5) * fx - 0.5, 0.0, sw - 1.0);
            const int x0 = static_cast<int>(u), x1 = std::min(x0 + 1, sw - 1);
            const double tx = u - x0;
            out(y, x) = (1 - ty) * ((1 - tx) * src(y0, x0) + tx * src(y0, x1)) +
                        ty * ((1 - tx) * src(y1, x0) + tx * src(y1, x1));
        }
    }
    return out;
}

Raster<double> grayscale(const RgbImage& image)
{
    Raster<double> out(image.height(), image.width());
    const Eigen::VectorXd sum = image.pixels().cast<double>().rowwise().sum();
    Eigen::Map<Eigen::VectorXd>(out.data(), out.size()) = sum / (3.0 * 255.0);
    return out;
}

namespace {

// L2 normalization with the configured guard; leaves an all-zero block at zero.
void guarded_normalize(Eigen::Ref<Eigen::VectorXd> v, double eps)
{
    const double n2 = v.squaredNorm();
    if (n2 > 0.0)
        v /= std::sqrt(n2 + eps * eps);
}

} // namespace

Eigen::VectorXd hog(const Raster<double>& raster, const HogConfig& cfg)
{
    cfg.validate();
    const int P = cfg.patch_size;
    const Raster<double> img = raster.rows() == P && raster.cols() == P ? raster : resample_bilinear(raster, P, P);
    const int C = cfg.cells(), nb = cfg.n_bins, cs = cfg.cell_size;
    const double bin_width = 180.0 / nb;

    Eigen::MatrixXd cells = Eigen::MatrixXd::Zero(C * C, nb); // one row per cell
    for (int y = 0; y < P; ++y)
        for (int x = 0; x < P; ++x) {
            const double gx = img(y, std::min(x + 1, P - 1)) - img(y, std::max(x - 1, 0));
            const double gy = img(std::min(y + 1, P - 1), x) - img(std::max(y - 1, 0), x);
            const double mag = std::hypot(gx, gy);
            if (mag == 0.0)
                continue;
            double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
            if (angle < 0.0)
                angle += 180.0;
            if (angle >= 180.0)
                angle -= 180.0;
            const double t = angle / bin_width;
            const int lo = static_cast<int>(std::floor(t));
            const double frac = t - lo;
            const int cell = (y / cs) * C + x / cs;
            cells(cell, lo % nb) += mag * (1.0 - frac);
            cells(cell, (lo + 1) % nb) += mag * frac;
        }

    const int B = cfg.block_size, blocks = C - B + 1, block_len = B * B * nb;
    Eigen::VectorXd out(cfg.dimension());
    Eigen::Index at = 0;
    for (int by = 0; by < blocks; ++by)
        for (int bx = 0; bx < blocks; ++bx) {
            auto v = out.segment(at, block_len);
            for (int i = 0; i < B; ++i)
                for (int j = 0; j < B; ++j)
                    v.segment((i * B + j) * nb, nb) = cells.row((by + i) * C + bx + j).transpose();
            guarded_normalize(v, cfg.norm_eps);
            v = v.cwiseMin(0.2);
            guarded_normalize(v, cfg.norm_eps);
            at += block_len;
        }
    return out;
}

Eigen::VectorXd color_histogram(const RgbImage& patch)
{
    Eigen::VectorXd h = Eigen::VectorXd::Zero(3 * kColorHistBins);
    if (patch.size() == 0)
        return h;
    for (Eigen::Index i = 0; i < patch.size(); ++i)
        for (int c = 0; c < 3; ++c)
            h(c * kColorHistBins + patch.pixels()(i, c) * kColorHistBins / 256) += 1.0;
    return h / static_cast<double>(patch.size());
}

Eigen::VectorXd HogColorDescriptor::describe(const RgbImage& patch) const
{
    Eigen::VectorXd out(dimension());
    out << hog(grayscale(patch), cfg_), color_histogram(patch);
    return out;
}

// ---------------------------------------------------------------- PCA

PcaModel pca_fit(const Eigen::MatrixXd& samples, int r)
{
    const Eigen::Index n = samples.rows(), d = samples.cols();
    if (r < 1)
        throw Error(ErrorCode::InvalidArgument, "PCA rank must be >= 1");
    if (d == 0 || r > std::min<Eigen::Index>(d, n - 1))
        throw Error(ErrorCode::RankTooHigh, "rank " + std::to_string(r) + " exceeds min(d, n - 1) for d = " +
                                                std::to_string(d) + ", n = " + std::to_string(n));
    PcaModel model;
    model.mean = samples.colwise().mean().transpose();
    const Eigen::MatrixXd centered = samples.rowwise() - model.mean.transpose();

    Eigen::MatrixXd directions(d, r); // candidate principal directions as columns
    if (n - 1 < d) {
        // Gram trick: eigenvectors of X X^T map to those of X^T X through X^T.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(centered * centered.transpose());
        for (int k = 0; k < r; ++k)
            directions.col(k) = centered.transpose() * eig.eigenvectors().col(n - 1 - k);
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(centered.transpose() * centered);
        for (int k = 0; k < r; ++k)
            directions.col(k) = eig.eigenvectors().col(d - 1 - k);
    }

    // Orthonormalize; directions with no variance are completed from the standard basis.
    model.basis.resize(r, d);
    Eigen::Index next_unit = 0;
    for (int k = 0; k < r; ++k) {
        Eigen::VectorXd v = directions.col(k);
        for (int pass = 0; pass < 2; ++pass)
            for (int j = 0; j < k; ++j)
                v -= model.basis.row(j).dot(v) * model.basis.row(j).transpose();
        while (v.norm() < 1e-9) {
            v = Eigen::VectorXd::Unit(d, next_unit++);
            for (int pass = 0; pass < 2; ++pass)
                for (int j = 0; j < k; ++j)
                    v -= model.basis.row(j).dot(v) * model.basis.row(j).transpose();
        }
        v.normalize();
        Eigen::Index peak;
        v.cwiseAbs().maxCoeff(&peak);
        if (v(peak) < 0.0)
            v = -v;
        model.basis.row(k) = v.transpose();
    }
    return model;
}

Eigen::VectorXd pca_project(const PcaModel& model, const Eigen::VectorXd& v)
{
    if (v.size() != model.input_dim())
        throw Error(ErrorCode::DimensionMismatch, "vector length does not match the PCA input dimension");
    return model.basis * (v - model.mean);
}

// ---------------------------------------------------------------- SVM

namespace {

struct ClassWeights {
    double pos = 1.0;
    double neg = 1.0;
};

ClassWeights class_weights(std::span<const int> labels, bool balanced)
{
    long long pos = 0, neg = 0;
    for (const int y : labels) {
        if (y != 1 && y != -1)
            throw Error(ErrorCode::InvalidArgument, "labels must be +1 or -1");
        (y > 0 ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0)
        throw Error(ErrorCode::SingleClass, pos == 0 ? "no positive labels" : "no negative labels");
    if (!balanced)
        return {};
    const double n = static_cast<double>(labels.size());
    return {n / (2.0 * static_cast<double>(pos)), n / (2.0 * static_cast<double>(neg))};
}

void check_svm_inputs(const Eigen::MatrixXd& features, std::span<const int> labels, const SvmOptions& options)
{
    if (static_cast<std::size_t>(features.rows()) != labels.size())
        throw Error(ErrorCode::DimensionMismatch, "one label per feature row is required");
    if (!(options.lambda > 0.0) || !std::isfinite(options.lambda))
        throw Error(ErrorCode::InvalidArgument, "lambda must be > 0");
    if (options.epochs < 1)
        throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1");
}

double objective_of(const Eigen::VectorXd& w, double b, const Eigen::MatrixXd& X, std::span<const int> labels,
                    const ClassWeights& cw, double lambda)
{
    const Eigen::VectorXd margins = (X * w).array() + b;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        loss += (y > 0 ? cw.pos : cw.neg) * std::max(0.0, 1.0 - y * margins(i));
    }
    return 0.5 * lambda * (w.squaredNorm() + b * b) + loss / static_cast<double>(X.rows());
}

} // namespace

LinearSvm svm_train(const Eigen::MatrixXd& features, std::span<const int> labels, const SvmOptions& options)
{
    check_svm_inputs(features, labels, options);
    const ClassWeights cw = class_weights(labels, options.balanced);
    const Eigen::Index n = features.rows(), d = features.cols();
    const double lambda = options.lambda;

    LinearSvm best{Eigen::VectorXd::Zero(d), 0.0};
    double best_obj = objective_of(best.weights, best.bias, features, labels, cw, lambda);

    // The optimum has objective <= that of the zero model, which bounds its norm.
    const double radius = std::sqrt(2.0 * best_obj / lambda);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d), w_sum(d);
    double b = 0.0, b_sum;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(options.seed);
    long long t = 0;

    auto consider = [&](const Eigen::VectorXd& cand_w, double cand_b) {
        const double obj = objective_of(cand_w, cand_b, features, labels, cw, lambda);
        if (obj < best_obj) {
            best_obj = obj;
            best = LinearSvm{cand_w, cand_b};
        }
    };

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        for (Eigen::Index i = n - 1; i > 0; --i) // Fisher-Yates with the portable generator
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
        w_sum.setZero();
        b_sum = 0.0;
        for (const Eigen::Index i : order) {
            ++t;
            const double eta = 1.0 / (lambda * static_cast<double>(t));
            const int y = labels[static_cast<std::size_t>(i)];
            const double margin = y * (features.row(i).dot(w) + b);
            const double shrink = 1.0 - eta * lambda;
            w *= shrink;
            b *= shrink;
            if (margin < 1.0) {
                const double step = eta * (y > 0 ? cw.pos : cw.neg) * y;
                w.noalias() += step * features.row(i).transpose();
                b += step;
            }
            const double norm = std::sqrt(w.squaredNorm() + b * b);
            if (norm > radius) {
                w *= radius / norm;
                b *= radius / norm;
            }
            w_sum += w;
            b_sum += b;
        }
        consider(w, b);
        consider(w_sum / static_cast<double>(n), b_sum / static_cast<double>(n));
    }
    return best;
}

double svm_score(const LinearSvm& model, const Eigen::VectorXd& v)
{
    if (v.size() != model.weights.size())
        throw Error(ErrorCode::DimensionMismatch, "feature length does not match the SVM");
    return model.weights.dot(v) + model.bias;
}

double svm_objective(const LinearSvm& model, const Eigen::MatrixXd& features, std::span<const int> labels,
                     const SvmOptions& options)
{
    check_svm_inputs(features, labels, options);
    if (features.cols() != model.weights.size())
        throw Error(ErrorCode::DimensionMismatch, "feature length does not match the SVM");
    return objective_of(model.weights, model.bias, features, labels, class_weights(labels, options.balanced),
                        options.lambda);
}

// ---------------------------------------------------------------- RGB-P features

Eigen::VectorXd build_rgbp_features(const RgbImage& image_patch, const ProbMap& pmap_patch, const RgbDescriptor& rgb,
                                    const HogConfig& cfg, const PcaModel* pca_p)
{
    if (image_patch.width() != pmap_patch.width() || image_patch.height() != pmap_patch.height())
        throw Error(ErrorCode::DimensionMismatch, "image and P-map patches differ in size");
    const Eigen::VectorXd a = rgb.describe(image_patch);
    if (!pca_p)
        return a;
    const Eigen::VectorXd b = pca_project(*pca_p, hog(pmap_patch.values(), cfg));
    Eigen::VectorXd out(a.size() + b.size());
    out << a, b;
    return out;
}

Eigen::VectorXd build_rgbp_features(const RgbImage& image_patch, const ProbMap& pmap_patch, const HogConfig& cfg,
                                    const PcaModel* pca_p)
{
    return build_rgbp_features(image_patch, pmap_patch, HogColorDescriptor(cfg), cfg, pca_p);
}

// ---------------------------------------------------------------- detector

std::string_view to_string(FeatureMode mode) { return mode == FeatureMode::Rgb ? "rgb" : "rgbp"; }

FeatureMode parse_feature_mode(std::string_view name)
{
    if (name == "rgb")
        return FeatureMode::Rgb;
    if (name == "rgbp")
        return FeatureMode::RgbP;
    throw Error(ErrorCode::InvalidArgument, "unknown feature mode '" + std::string(name) + "' (rgb or rgbp)");
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& features)
{
    Standardizer s;
    s.mean = features.colwise().mean().transpose();
    const Eigen::VectorXd var =
        (features.rowwise() - s.mean.transpose()).array().square().colwise().mean().transpose();
    s.scale = var.unaryExpr([](double v) { return v > 1e-18 ? 1.0 / std::sqrt(v) : 0.0; });
    return s;
}

Eigen::VectorXd Detector::features(const RgbImage& image, const ProbMap& pmap, const RectProposal& rect) const
{
    if (mode == FeatureMode::RgbP && !pca_p)
        throw Error(ErrorCode::InvalidArgument, "RGB-P detector lacks its PCA model");
    return build_rgbp_features(crop(image, rect), crop(pmap, rect), hog_cfg,
                               mode == FeatureMode::RgbP ? &*pca_p : nullptr);
}

double Detector::score(const RgbImage& image, const ProbMap& pmap, const RectProposal& rect) const
{
    return svm_score(svm, standardizer.apply(features(image, pmap, rect)));
}

namespace {

RectProposal jitter(Rng& rng, const RectProposal& box, double amount, int width, int height)
{
    const double cx = box.x + box.w / 2.0 + rng.uniform(-amount, amount) * box.w;
    const double cy = box.y + box.h / 2.0 + rng.uniform(-amount, amount) * box.h;
    const double w = box.w * std::exp(rng.uniform(-amount, amount));
    const double h = box.h * std::exp(rng.uniform(-amount, amount));
    const int x0 = std::clamp(static_cast<int>(std::lround(cx - w / 2.0)), 0, width - 1);
    const int y0 = std::clamp(static_cast<int>(std::lround(cy - h / 2.0)), 0, height - 1);
    const int x1 = std::clamp(static_cast<int>(std::lround(cx + w / 2.0)), x0 + 1, width);
    const int y1 = std::clamp(static_cast<int>(std::lround(cy + h / 2.0)), y0 + 1, height);
    return RectProposal{x0, y0, x1 - x0, y1 - y0, std::nullopt};
}

} // namespace

std::vector<SceneSpec> proposal_grid(int n, std::uint64_t first_seed)
{
    std::vector<SceneSpec> out;
    for (int i = 0; i < n; ++i) {
        SceneSpec s;
        s.n_targets = 2;
        s.n_distractors = 6;
        s.palette_overlap = 1.0;
        s.background = static_cast<BackgroundKind>(i % 3);
        s.seed = first_seed + static_cast<std::uint64_t>(i);
        out.push_back(s);
    }
    return out;
}

ProposalCorpus build_corpus(std::span<const SceneSpec> scenes, const OracleNoise& noise, const CorpusOptions& options)
{
    static constexpr int kScales[] = {40, 56, 72, 96};
    static constexpr double kRatios[] = {0.75, 1.0, 1.33};
    ProposalCorpus corpus;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        const SynthScene scene = gen_scene(scenes[s]);
        OracleNoise scene_noise = noise;
        scene_noise.seed = Rng::mix(noise.seed, scenes[s].seed);
        const CutoutMask targets = mask_union(scene.gt_masks, scene.image.width(), scene.image.height());
        corpus.pmaps.push_back(oracle_pmap(targets, scene.distractor_masks, scene_noise));
        corpus.images.push_back(scene.image);
        corpus.gt_rects.push_back(scene.gt_rects);

        Rng rng(Rng::mix(scenes[s].seed, 0xc0));
        const int W = scene.image.width(), H = scene.image.height();
        std::vector<RectProposal> props;
        // Target boxes alternate tight and loose jitter so both sides of the IoU
        // threshold are populated; look-alike boxes stay tight, as a detector would propose them.
        for (const auto& g : scene.gt_rects)
            for (int j = 0; j < options.jitter_per_target; ++j)
                props.push_back(jitter(rng, g, j % 2 == 0 ? 0.06 : 0.3, W, H));
        for (std::size_t d = 0; d < scene.distractor_rects.size(); ++d)
            if (scene.distractor_lookalike[d] && scene.distractor_rects[d].w >= 24)
                for (int j = 0; j < options.jitter_per_lookalike; ++j)
                    props.push_back(jitter(rng, scene.distractor_rects[d], 0.06, W, H));
        if (static_cast<int>(props.size()) > options.per_scene)
            props.resize(static_cast<std::size_t>(options.per_scene));

        std::vector<RectProposal> windows = gen_proposals(scene.image, kScales, 0.5, kRatios);
        for (std::size_t i = windows.size(); i > 1; --i)
            std::swap(windows[i - 1], windows[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
        for (std::size_t i = 0; static_cast<int>(props.size()) < options.per_scene && i < windows.size(); ++i)
            props.push_back(windows[i]);

        const std::vector<bool> labels = label_samples(props, scene.gt_rects, options.label_thresh);
        for (std::size_t i = 0; i < props.size(); ++i)
            corpus.items.push_back(ProposalCorpus::Item{s, props[i], labels[i]});
    }
    return corpus;
}

Detector train_detector(const ProposalCorpus& corpus, const DetectorOptions& options)
{
    options.hog_cfg.validate();
    if (corpus.items.empty())
        throw Error(ErrorCode::EmptyInput, "training corpus has no proposals");
    Detector det;
    det.mode = options.mode;
    det.hog_cfg = options.hog_cfg;

    const HogColorDescriptor rgb(options.hog_cfg);
    const auto n = static_cast<Eigen::Index>(corpus.items.size());
    Eigen::MatrixXd rgb_part(n, rgb.dimension());
    Eigen::MatrixXd p_hog;
    if (det.mode == FeatureMode::RgbP)
        p_hog.resize(n, options.hog_cfg.dimension());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& item = corpus.items[static_cast<std::size_t>(i)];
        rgb_part.row(i) = rgb.describe(crop(corpus.images[item.image], item.rect)).transpose();
        if (det.mode == FeatureMode::RgbP)
            p_hog.row(i) = hog(crop(corpus.pmaps[item.image], item.rect).values(), options.hog_cfg).transpose();
    }

    Eigen::MatrixXd features = rgb_part;
    if (det.mode == FeatureMode::RgbP) {
        // Evenly spaced subsample keeps the eigenproblem small.
        const Eigen::Index m = std::min<Eigen::Index>(n, std::max(2, options.pca_samples));
        Eigen::MatrixXd subset(m, p_hog.cols());
        for (Eigen::Index k = 0; k < m; ++k)
            subset.row(k) = p_hog.row(k * n / m);
        det.pca_p = pca_fit(subset, options.pca_rank);
        features.resize(n, rgb_part.cols() + options.pca_rank);
        features.leftCols(rgb_part.cols()) = rgb_part;
        features.rightCols(options.pca_rank) =
            (p_hog.rowwise() - det.pca_p->mean.transpose()) * det.pca_p->basis.transpose();
    }

    det.standardizer = Standardizer::fit(features);
    const Eigen::MatrixXd standardized =
        (features.rowwise() - det.standardizer.mean.transpose()).array().rowwise() *
        det.standardizer.scale.transpose().array();
    std::vector<int> labels;
    for (const auto& item : corpus.items)
        labels.push_back(item.positive ? 1 : -1);
    det.svm = svm_train(standardized, labels, options.svm);
    return det;
}

std::vector<LabeledPrediction> evaluate_detector(const Detector& detector, const ProposalCorpus& corpus)
{
    std::vector<LabeledPrediction> out;
    out.reserve(corpus.items.size());
    for (const auto& item : corpus.items)
        out.push_back({detector.score(corpus.images[item.image], corpus.pmaps[item.image], item.rect) > 0.0,
                       item.positive});
    return out;
}

// ---------------------------------------------------------------- model file

namespace {

constexpr char kModelMagic[8] = {'P', 'M', 'A', 'P', 'D', 'E', 'T', '\0'};

class Writer {
public:
    void raw(const void* p, std::size_t n)
    {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u32(std::uint32_t v)
    {
        for (int k = 0; k < 4; ++k)
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
    }
    void f64(double v)
    {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int k = 0; k < 8; ++k)
            out_.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
    }
    void vec(const Eigen::VectorXd& v)
    {
        u32(static_cast<std::uint32_t>(v.size()));
        for (Eigen::Index i = 0; i < v.size(); ++i)
            f64(v(i));
    }
    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

class Reader {
public:
    explicit Reader(ByteView in) : in_(in) {}
    void need(std::size_t n) const
    {
        if (in_.size() - pos_ < n)
            throw Error(ErrorCode::CorruptData, "model file is truncated");
    }
    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k)
            v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * k);
        return v;
    }
    double f64()
    {
        need(8);
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k)
            bits |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * k);
        return std::bit_cast<double>(bits);
    }
    Eigen::VectorXd vec()
    {
        const std::uint32_t n = u32();
        need(static_cast<std::size_t>(n) * 8);
        Eigen::VectorXd v(n);
        for (std::uint32_t i = 0; i < n; ++i)
            v(i) = f64();
        return v;
    }
    bool magic()
    {
        if (in_.size() < sizeof kModelMagic || std::memcmp(in_.data(), kModelMagic, sizeof kModelMagic) != 0)
            return false;
        pos_ = sizeof kModelMagic;
        return true;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    ByteView in_;
    std::size_t pos_ = 0;
};

} // namespace

Bytes encode_detector(const Detector& det)
{
    Writer w;
    w.raw(kModelMagic, sizeof kModelMagic);
    w.u32(kModelFormatVersion);
    w.u32(det.mode == FeatureMode::RgbP ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(det.hog_cfg.cell_size));
    w.u32(static_cast<std::uint32_t>(det.hog_cfg.block_size));
    w.u32(static_cast<std::uint32_t>(det.hog_cfg.n_bins));
    w.u32(static_cast<std::uint32_t>(det.hog_cfg.patch_size));
    w.f64(det.hog_cfg.norm_eps);
    w.vec(det.standardizer.mean);
    w.vec(det.standardizer.scale);
    if (det.mode == FeatureMode::RgbP) {
        if (!det.pca_p)
            throw Error(ErrorCode::InvalidArgument, "RGB-P detector lacks its PCA model");
        w.u32(static_cast<std::uint32_t>(det.pca_p->rank()));
        w.vec(det.pca_p->mean);
        for (int k = 0; k < det.pca_p->rank(); ++k)
            w.vec(det.pca_p->basis.row(k).transpose());
    }
    w.vec(det.svm.weights);
    w.f64(det.svm.bias);
    return w.take();
}

Detector decode_detector(ByteView bytes)
{
    Reader r(bytes);
    if (!r.magic())
        throw Error(ErrorCode::UnsupportedFormat, "not a detector model file");
    const std::uint32_t version = r.u32();
    if (version != kModelFormatVersion)
        throw Error(ErrorCode::UnsupportedFormat, "unsupported model version " + std::to_string(version));
    Detector det;
    const std::uint32_t mode = r.u32();
    if (mode > 1)
        throw Error(ErrorCode::CorruptData, "unknown feature mode in model file");
    det.mode = mode == 1 ? FeatureMode::RgbP : FeatureMode::Rgb;
    det.hog_cfg.cell_size = static_cast<int>(r.u32());
    det.hog_cfg.block_size = static_cast<int>(r.u32());
    det.hog_cfg.n_bins = static_cast<int>(r.u32());
    det.hog_cfg.patch_size = static_cast<int>(r.u32());
    det.hog_cfg.norm_eps = r.f64();
    try {
        det.hog_cfg.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::CorruptData, std::string("bad HoG config in model file: ") + e.detail());
    }
    det.standardizer.mean = r.vec();
    det.standardizer.scale = r.vec();
    const Eigen::Index rgb_dim = det.hog_cfg.dimension() + 3 * kColorHistBins;
    Eigen::Index dim = rgb_dim;
    if (det.mode == FeatureMode::RgbP) {
        const std::uint32_t rank = r.u32();
        PcaModel pca;
        pca.mean = r.vec();
        if (pca.mean.size() != det.hog_cfg.dimension())
            throw Error(ErrorCode::CorruptData, "PCA input dimension does not match the HoG config");
        pca.basis.resize(rank, pca.mean.size());
        for (std::uint32_t k = 0; k < rank; ++k) {
            const Eigen::VectorXd row = r.vec();
            if (row.size() != pca.mean.size())
                throw Error(ErrorCode::CorruptData, "PCA basis row has the wrong length");
            pca.basis.row(k) = row.transpose();
        }
        det.pca_p = std::move(pca);
        dim += rank;
    }
    det.svm.weights = r.vec();
    det.svm.bias = r.f64();
    if (!r.done())
        throw Error(ErrorCode::CorruptData, "trailing bytes after model");
    if (det.standardizer.mean.size() != dim || det.standardizer.scale.size() != dim || det.svm.weights.size() != dim)
        throw Error(ErrorCode::CorruptData, "model dimensions are inconsistent");
    return det;
}

void save_detector(const Detector& detector, const std::filesystem::path& path)
{
    write_file(path, encode_detector(detector));
}

Detector load_detector(const std::filesystem::path& path) { return decode_detector(read_file(path)); }

// ---------------------------------------------------------------- ranking and aggregation

std::vector<Detection> rank_proposals(const Detector& detector, const RgbImage& image, const ProbMap& pmap,
                                      std::span<const RectProposal> proposals)
{
    std::vector<Detection> out;
    out.reserve(proposals.size());
    for (const auto& p : proposals)
        out.push_back({p, detector.score(image, pmap, p)});
    std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
    return out;
}

std::vector<Detection> nms(std::vector<Detection> detections, double iou_thresh)
{
    std::stable_sort(detections.begin(), detections.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    std::vector<Detection> kept;
    for (const auto& d : detections)
        if (std::none_of(kept.begin(), kept.end(),
                         [&](const Detection& k) { return rect_iou(k.rect, d.rect) > iou_thresh; }))
            kept.push_back(d);
    return kept;
}

double score_confidence(double score) { return 1.0 / (1.0 + std::exp(-score)); }

ProbMap aggregate_pmap(int width, int height, std::span<const AggregateEntry> entries)
{
    Raster<double> acc = Raster<double>::Zero(height, width);
    for (const auto& e : entries) {
        if (!e.rect.inside(width, height))
            throw Error(ErrorCode::OutOfBounds, "aggregation rectangle is not inside the image");
        if (e.local.width() != e.rect.w || e.local.height() != e.rect.h)
            throw Error(ErrorCode::DimensionMismatch, "local P-map does not match its rectangle");
        if (!(e.confidence >= 0.0) || !std::isfinite(e.confidence))
            throw Error(ErrorCode::InvalidArgument, "confidences must be finite and >= 0");
        acc.block(e.rect.y, e.rect.x, e.rect.h, e.rect.w) += e.confidence * e.local.values();
    }
    const double peak = acc.maxCoeff();
    if (peak > 0.0)
        acc /= peak;
    return ProbMap(std::move(acc));
}

} // namespace pmapcut
