#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pmapcut/cutout.hpp"
#include "pmapcut/raster.hpp"
#include "pmapcut/synth.hpp"

namespace pmapcut {

/// |P and G| / |P or G|; 1.0 when both masks are empty.
double mask_iou(const CutoutMask& pred, const CutoutMask& gt);

struct LabeledPrediction {
    bool predicted = false;
    bool truth = false;
};

/// Mean of the positive-class and negative-class recalls. Throws MissingClass
/// unless both classes occur among the true labels.
double balanced_recall(std::span<const LabeledPrediction> samples);

struct RankedImage {
    std::vector<RectProposal> ranked; ///< best first
    std::vector<RectProposal> gt;
};

/// Fraction of images where one of the first k ranked boxes reaches
/// rect_iou >= iou_thresh with some ground-truth box.
double topk_accuracy(std::span<const RankedImage> images, int k, double iou_thresh = 0.5);

enum class Method { PmapGrabcut, PlainGrabcut };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct BenchRecord {
    std::size_t scene = 0; ///< index into the spec grid
    std::uint64_t seed = 0;
    int target = 0;
    Method method = Method::PmapGrabcut;
    double iou = 0.0;
    double runtime_ms = 0.0;
    int iterations = 0;
    std::optional<std::string> error; ///< error code when the run threw; iou is then 0
};

struct MethodSummary {
    double mean_iou = 0.0;
    int runs = 0;
    int failures = 0;
    int wins = 0; ///< runs where this method had the strictly highest IoU
};

struct BenchReport {
    std::vector<BenchRecord> records; ///< ordered by (scene, target, method)
    std::map<Method, MethodSummary> summary;

    bool all_completed() const;
};

struct BenchOptions {
    /// The crop around each gt box is padded by max(min_margin, margin_frac * max(w, h)).
    double margin_frac = 0.25;
    int min_margin = 8;
    int threads = 0; ///< 0 picks the hardware concurrency
};

/// For each scene and target: oracle P-map on the full image (other targets
/// count as distractors), crop around the gt box, run every method on the crop
/// with the gt box as rectangle and score IoU on the crop. Failed runs are
/// recorded with their error code and IoU 0.
BenchReport run_benchmark(std::span<const SceneSpec> grid, const OracleNoise& noise, const CutoutParams& params,
                          std::span<const Method> methods, const BenchOptions& options = {});

/// Summary recomputed from per-run records.
std::map<Method, MethodSummary> summarize(std::span<const BenchRecord> records);

/// One-target scenes with eight distractors, all look-alikes, cycling through
/// the background kinds. Seeds run from first_seed upwards.
std::vector<SceneSpec> clutter_grid(int n, std::uint64_t first_seed = 1);

/// One target on a flat background, nothing else.
std::vector<SceneSpec> easy_grid(int n, std::uint64_t first_seed = 1);

inline constexpr int kReportSchemaVersion = 1;

std::string report_json(const BenchReport& report);
std::string report_csv(const BenchReport& report);

} // namespace pmapcut
