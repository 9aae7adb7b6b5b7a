#include "pmapcut/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "pmapcut/error.hpp"
#include "pmapcut/rng.hpp"

namespace pmapcut {

double mask_iou(const CutoutMask& pred, const CutoutMask& gt)
{
    if (pred.width() != gt.width() || pred.height() != gt.height())
        throw Error(ErrorCode::DimensionMismatch, "masks differ in size");
    const auto uni = (pred.labels() || gt.labels()).count();
    if (uni == 0)
        return 1.0;
    return static_cast<double>((pred.labels() && gt.labels()).count()) / static_cast<double>(uni);
}

double balanced_recall(std::span<const LabeledPrediction> samples)
{
    long long pos = 0, neg = 0, tp = 0, tn = 0;
    for (const auto& s : samples) {
        if (s.truth) {
            ++pos;
            tp += s.predicted;
        } else {
            ++neg;
            tn += !s.predicted;
        }
    }
    if (pos == 0 || neg == 0)
        throw Error(ErrorCode::MissingClass, pos == 0 ? "no positive samples" : "no negative samples");
    return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) + static_cast<double>(tn) / static_cast<double>(neg));
}

double topk_accuracy(std::span<const RankedImage> images, int k, double iou_thresh)
{
    if (k < 1)
        throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    if (images.empty())
        return 0.0;
    int hits = 0;
    for (const auto& img : images) {
        const std::size_t top = std::min(img.ranked.size(), static_cast<std::size_t>(k));
        bool hit = false;
        for (std::size_t i = 0; i < top && !hit; ++i)
            for (const auto& g : img.gt)
                hit = hit || rect_iou(img.ranked[i], g) >= iou_thresh;
        hits += hit;
    }
    return static_cast<double>(hits) / static_cast<double>(images.size());
}

std::string_view to_string(Method m) { return m == Method::PmapGrabcut ? "pmap_grabcut" : "plain_grabcut"; }

Method parse_method(std::string_view name)
{
    if (name == "pmap_grabcut" || name == "pmap")
        return Method::PmapGrabcut;
    if (name == "plain_grabcut" || name == "plain")
        return Method::PlainGrabcut;
    throw Error(ErrorCode::InvalidArgument, "unknown method '" + std::string(name) + "'");
}

bool BenchReport::all_completed() const
{
    return std::none_of(records.begin(), records.end(), [](const BenchRecord& r) { return r.error.has_value(); });
}

std::map<Method, MethodSummary> summarize(std::span<const BenchRecord> records)
{
    std::map<Method, MethodSummary> out;
    for (const auto& r : records) {
        MethodSummary& s = out[r.method];
        s.mean_iou += r.iou;
        ++s.runs;
        s.failures += r.error.has_value();
    }
    for (auto& [m, s] : out)
        s.mean_iou /= s.runs;

    // Records of one (scene, target) are adjacent.
    for (std::size_t i = 0; i < records.size();) {
        std::size_t j = i;
        while (j < records.size() && records[j].scene == records[i].scene && records[j].target == records[i].target)
            ++j;
        std::size_t best = i;
        int ties = 0;
        for (std::size_t q = i; q < j; ++q) {
            if (records[q].iou > records[best].iou) {
                best = q;
                ties = 0;
            } else if (q != best && records[q].iou == records[best].iou) {
                ++ties;
            }
        }
        if (j - i > 1 && ties == 0)
            ++out[records[best].method].wins;
        i = j;
    }
    return out;
}

namespace {

std::vector<BenchRecord> bench_scene(std::size_t index, const SceneSpec& spec, const OracleNoise& noise,
                                     const CutoutParams& params, std::span<const Method> methods,
                                     const BenchOptions& options)
{
    using Clock = std::chrono::steady_clock;
    const SynthScene scene = gen_scene(spec);
    std::vector<BenchRecord> out;
    for (std::size_t t = 0; t < scene.gt_masks.size(); ++t) {
        std::vector<CutoutMask> others = scene.distractor_masks;
        for (std::size_t o = 0; o < scene.gt_masks.size(); ++o)
            if (o != t)
                others.push_back(scene.gt_masks[o]);
        OracleNoise target_noise = noise;
        target_noise.seed = Rng::mix(Rng::mix(noise.seed, spec.seed), t);
        const ProbMap pmap = oracle_pmap(scene.gt_masks[t], others, target_noise);

        const RectProposal& box = scene.gt_rects[t];
        const int margin =
            std::max(options.min_margin, static_cast<int>(std::lround(options.margin_frac * std::max(box.w, box.h))));
        const RectProposal region = pad_rect(box, margin, scene.image.width(), scene.image.height());
        const RgbImage image = crop(scene.image, region);
        const CutoutMask gt = crop(scene.gt_masks[t], region);
        const ProbMap local = crop(pmap, region);
        const RectProposal rect{box.x - region.x, box.y - region.y, box.w, box.h, std::nullopt};

        for (const Method m : methods) {
            BenchRecord rec{index, spec.seed, static_cast<int>(t), m, 0.0, 0.0, 0, std::nullopt};
            const auto start = Clock::now();
            try {
                const CutoutResult res =
                    m == Method::PmapGrabcut ? pmap_grabcut(image, local, params) : plain_grabcut(image, rect, params);
                rec.iou = mask_iou(res.mask, gt);
                rec.iterations = static_cast<int>(res.trace.iterations.size());
            } catch (const Error& e) {
                rec.error = std::string(to_string(e.code()));
            }
            rec.runtime_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
            out.push_back(std::move(rec));
        }
    }
    return out;
}

} // namespace

BenchReport run_benchmark(std::span<const SceneSpec> grid, const OracleNoise& noise, const CutoutParams& params,
                          std::span<const Method> methods, const BenchOptions& options)
{
    if (grid.empty())
        throw Error(ErrorCode::EmptyInput, "benchmark grid is empty");
    if (methods.empty())
        throw Error(ErrorCode::InvalidArgument, "no methods selected");
    params.validate();

    std::vector<std::vector<BenchRecord>> per_scene(grid.size());
    std::vector<std::exception_ptr> failures(grid.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < grid.size(); i = next++) {
            try {
                per_scene[i] = bench_scene(i, grid[i], noise, params, methods, options);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t n_threads =
        std::min<std::size_t>(grid.size(), options.threads > 0 ? static_cast<std::size_t>(options.threads) : hw);
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < n_threads; ++i)
            pool.emplace_back(worker);
    }
    for (const auto& f : failures)
        if (f)
            std::rethrow_exception(f);

    BenchReport report;
    for (auto& recs : per_scene)
        for (auto& r : recs)
            report.records.push_back(std::move(r));
    report.summary = summarize(report.records);
    return report;
}

std::vector<SceneSpec> clutter_grid(int n, std::uint64_t first_seed)
{
    std::vector<SceneSpec> grid;
    for (int i = 0; i < n; ++i) {
        SceneSpec s;
        s.n_targets = 1;
        s.n_distractors = 8;
        s.palette_overlap = 1.0;
        s.background = static_cast<BackgroundKind>(i % 3);
        s.seed = first_seed + static_cast<std::uint64_t>(i);
        grid.push_back(s);
    }
    return grid;
}

std::vector<SceneSpec> easy_grid(int n, std::uint64_t first_seed)
{
    std::vector<SceneSpec> grid;
    for (int i = 0; i < n; ++i) {
        SceneSpec s;
        s.seed = first_seed + static_cast<std::uint64_t>(i);
        grid.push_back(s);
    }
    return grid;
}

std::string report_json(const BenchReport& report)
{
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : report.records) {
        records.push_back({{"scene", r.scene},
                           {"seed", r.seed},
                           {"target", r.target},
                           {"method", to_string(r.method)},
                           {"iou", r.iou},
                           {"runtime_ms", r.runtime_ms},
                           {"iterations", r.iterations},
                           {"error", r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr)}});
    }
    nlohmann::json summary = nlohmann::json::object();
    for (const auto& [m, s] : report.summary)
        summary[std::string(to_string(m))] = {
            {"mean_iou", s.mean_iou}, {"runs", s.runs}, {"failures", s.failures}, {"wins", s.wins}};
    const nlohmann::json doc{{"schema_version", kReportSchemaVersion}, {"records", records}, {"summary", summary}};
    return doc.dump(2);
}

std::string report_csv(const BenchReport& report)
{
    std::ostringstream out;
    out.precision(17);
    out << "# schema_version=" << kReportSchemaVersion << "\n";
    out << "scene,seed,target,method,iou,runtime_ms,iterations,error\n";
    for (const auto& r : report.records)
        out << r.scene << ',' << r.seed << ',' << r.target << ',' << to_string(r.method) << ',' << r.iou << ','
            << r.runtime_ms << ',' << r.iterations << ',' << r.error.value_or("") << '\n';
    return out.str();
}

} // namespace pmapcut
