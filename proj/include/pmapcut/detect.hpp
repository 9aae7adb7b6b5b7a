#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "pmapcut/eval.hpp"
#include "pmapcut/image_io.hpp"
#include "pmapcut/raster.hpp"
#include "pmapcut/synth.hpp"

namespace pmapcut {

// ---------------------------------------------------------------- proposals

/// Multi-scale sliding windows. A window of scale s and aspect ratio a
/// (width / height) is round(s * sqrt(a)) wide and round(s / sqrt(a)) tall;
/// steps are max(1, round(stride_frac * size)) along each axis. Ordered by
/// scale, then aspect ratio, then row-major position. Throws ScaleTooLarge
/// when a scale exceeds the smaller image side.
std::vector<RectProposal> gen_proposals(const RgbImage& image, std::span<const int> scales, double stride_frac,
                                        std::span<const double> aspect_ratios);

/// JSON lines, one {"x","y","w","h"[,"confidence"]} object per line; blank
/// lines are skipped. Throws ParseError with the offending line number.
std::vector<RectProposal> parse_proposals(std::string_view text);
std::vector<RectProposal> load_proposals(const std::filesystem::path& path);

/// Positive iff the best rect_iou against any ground-truth box exceeds `thresh`.
std::vector<bool> label_samples(std::span<const RectProposal> proposals, std::span<const RectProposal> gt,
                                double thresh = 0.8);

// ---------------------------------------------------------------- features

struct HogConfig {
    int cell_size = 8;
    int block_size = 2; ///< cells per block side
    int n_bins = 9;     ///< unsigned orientation bins over [0, 180)
    int patch_size = 64;
    /// Block normalization is v / sqrt(|v|^2 + norm_eps^2). A guard of this
    /// size keeps faint gradients faint instead of blowing them up to unit norm.
    double norm_eps = 1.0;

    void validate() const;
    int cells() const { return patch_size / cell_size; }
    int dimension() const;
};

/// Bilinear resampling with pixel-center alignment and clamped borders.
Raster<double> resample_bilinear(const Raster<double>& src, int width, int height);

/// Mean of the three channels scaled to [0, 1].
Raster<double> grayscale(const RgbImage& image);

/// Dalal-Triggs HoG: central differences, linear interpolation between bins
/// centred at b * 180 / n_bins, cell sums, overlapping blocks with stride one
/// cell and L2-hys normalization (clip 0.2). Inputs of another size are
/// resampled to patch_size first.
Eigen::VectorXd hog(const Raster<double>& raster, const HogConfig& cfg);

inline constexpr int kColorHistBins = 16;

/// Per-channel 16-bin histograms (R, G, B), each normalized to sum to one.
Eigen::VectorXd color_histogram(const RgbImage& patch);

/// Appearance descriptor of an RGB patch. The default is HoG on grayscale
/// plus color histograms; another embedding can be plugged in here.
class RgbDescriptor {
public:
    virtual ~RgbDescriptor() = default;
    virtual int dimension() const = 0;
    virtual Eigen::VectorXd describe(const RgbImage& patch) const = 0;
};

class HogColorDescriptor final : public RgbDescriptor {
public:
    explicit HogColorDescriptor(HogConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }
    int dimension() const override { return cfg_.dimension() + 3 * kColorHistBins; }
    Eigen::VectorXd describe(const RgbImage& patch) const override;

private:
    HogConfig cfg_;
};

// ---------------------------------------------------------------- PCA / SVM

/// Rows of `basis` are orthonormal principal directions, strongest first.
struct PcaModel {
    Eigen::VectorXd mean;
    Eigen::MatrixXd basis; ///< r x d

    int rank() const { return static_cast<int>(basis.rows()); }
    int input_dim() const { return static_cast<int>(basis.cols()); }
};

/// `samples` holds one d-vector per row. Needs at least two samples and
/// r <= min(d, n - 1) (RankTooHigh otherwise). Each direction's sign is fixed
/// so its largest-magnitude entry is positive.
PcaModel pca_fit(const Eigen::MatrixXd& samples, int r);
Eigen::VectorXd pca_project(const PcaModel& model, const Eigen::VectorXd& v);

struct LinearSvm {
    Eigen::VectorXd weights;
    double bias = 0.0;

    int dimension() const { return static_cast<int>(weights.size()); }
};

struct SvmOptions {
    double lambda = 0.1;
    int epochs = 30;
    std::uint64_t seed = 1;
    /// Weight each class's hinge terms by n / (2 n_class).
    bool balanced = true;
};

/// Pegasos stochastic subgradient descent on
///   lambda/2 (|w|^2 + b^2) + 1/n sum_i c_i max(0, 1 - y_i (w.x_i + b)),
/// with the bias treated as a weight on a constant feature. The iterate with
/// the lowest objective over all epochs is returned, the zero model included.
/// `labels` are +1 / -1. Throws SingleClass when only one label occurs.
LinearSvm svm_train(const Eigen::MatrixXd& features, std::span<const int> labels, const SvmOptions& options = {});

double svm_score(const LinearSvm& model, const Eigen::VectorXd& v);

/// The objective minimized by svm_train, for inspection.
double svm_objective(const LinearSvm& model, const Eigen::MatrixXd& features, std::span<const int> labels,
                     const SvmOptions& options);

// ---------------------------------------------------------------- RGB-P features

/// RGB descriptor followed by the PCA projection of the P-map HoG. With a null
/// `pca_p` only the RGB part is produced. Patches must share dimensions.
Eigen::VectorXd build_rgbp_features(const RgbImage& image_patch, const ProbMap& pmap_patch, const HogConfig& cfg,
                                    const PcaModel* pca_p);
Eigen::VectorXd build_rgbp_features(const RgbImage& image_patch, const ProbMap& pmap_patch,
                                    const RgbDescriptor& rgb, const HogConfig& cfg, const PcaModel* pca_p);

// ---------------------------------------------------------------- detector

enum class FeatureMode { Rgb, RgbP };

std::string_view to_string(FeatureMode mode);
FeatureMode parse_feature_mode(std::string_view name);

/// Per-dimension affine normalization fitted on training features.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale; ///< multiplies (v - mean)

    static Standardizer fit(const Eigen::MatrixXd& features);
    Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return (v - mean).cwiseProduct(scale); }
};

/// Proposal scorer: features, standardization and a linear SVM.
struct Detector {
    FeatureMode mode = FeatureMode::RgbP;
    HogConfig hog_cfg;
    std::optional<PcaModel> pca_p; ///< present in RGB-P mode
    Standardizer standardizer;
    LinearSvm svm;

    Eigen::VectorXd features(const RgbImage& image, const ProbMap& pmap, const RectProposal& rect) const;
    double score(const RgbImage& image, const ProbMap& pmap, const RectProposal& rect) const;
};

/// Labeled proposals over a set of images with their P-maps.
struct ProposalCorpus {
    struct Item {
        std::size_t image = 0;
        RectProposal rect;
        bool positive = false;
    };
    std::vector<RgbImage> images;
    std::vector<ProbMap> pmaps;
    std::vector<std::vector<RectProposal>> gt_rects;
    std::vector<Item> items;
};

struct CorpusOptions {
    int per_scene = 100;       ///< proposals drawn per scene
    int jitter_per_target = 14; ///< jittered boxes around each target
    int jitter_per_lookalike = 12; ///< tight boxes around each look-alike chair
    double label_thresh = 0.8;
};

/// Scenes for the proposal-scoring corpus: 2 targets, 6 look-alike
/// distractors, backgrounds cycling flat / gradient / texture, consecutive seeds.
std::vector<SceneSpec> proposal_grid(int n, std::uint64_t first_seed);

/// Synthetic corpus: oracle P-map over all targets of each scene; proposals
/// are jittered boxes around targets and look-alike distractors, topped up
/// with a seeded sample of sliding windows.
ProposalCorpus build_corpus(std::span<const SceneSpec> scenes, const OracleNoise& noise,
                            const CorpusOptions& options = {});

struct DetectorOptions {
    FeatureMode mode = FeatureMode::RgbP;
    HogConfig hog_cfg;
    int pca_rank = 128;
    int pca_samples = 512; ///< PCA is fitted on at most this many training patches
    SvmOptions svm;
};

Detector train_detector(const ProposalCorpus& corpus, const DetectorOptions& options = {});

/// Predicted label = score > 0, paired with the corpus label.
std::vector<LabeledPrediction> evaluate_detector(const Detector& detector, const ProposalCorpus& corpus);

inline constexpr std::uint32_t kModelFormatVersion = 1;

Bytes encode_detector(const Detector& detector);
Detector decode_detector(ByteView bytes);
void save_detector(const Detector& detector, const std::filesystem::path& path);
Detector load_detector(const std::filesystem::path& path);

// ---------------------------------------------------------------- ranking and aggregation

struct Detection {
    RectProposal rect;
    double score = 0.0;
};

/// Scores every proposal and sorts by descending score (stable).
std::vector<Detection> rank_proposals(const Detector& detector, const RgbImage& image, const ProbMap& pmap,
                                      std::span<const RectProposal> proposals);

/// Greedy IoU suppression over score-sorted detections.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_thresh = 0.5);

/// Logistic squashing of an SVM score into a (0, 1) confidence.
double score_confidence(double score);

struct AggregateEntry {
    RectProposal rect;
    ProbMap local; ///< rect-sized
    double confidence = 0.0;
};

/// acc = sum of confidence * local map over covering entries, divided by its
/// maximum; all zeros when nothing accumulates.
ProbMap aggregate_pmap(int width, int height, std::span<const AggregateEntry> entries);

} // namespace pmapcut
