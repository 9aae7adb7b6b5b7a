#include "pmapcut/cli.hpp"

#include <chrono>
#include <csignal>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "pmapcut/cutout.hpp"
#include "pmapcut/detect.hpp"
#include "pmapcut/error.hpp"
#include "pmapcut/eval.hpp"
#include "pmapcut/image_io.hpp"
#include "pmapcut/json_io.hpp"
#include "pmapcut/service.hpp"
#include "pmapcut/synth.hpp"

namespace pmapcut {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<RectProposal> parse_rect(const std::string& text)
{
    RectProposal r;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream in(text);
    if (!(in >> r.x >> c1 >> r.y >> c2 >> r.w >> c3 >> r.h) || c1 != ',' || c2 != ',' || c3 != ',' || !in.eof())
        return std::nullopt;
    return r;
}

const CLI::Validator kRectFormat(
    [](std::string& s) { return parse_rect(s) ? std::string() : "expected x,y,w,h, got '" + s + "'"; }, "X,Y,W,H");

void add_params(CLI::App* cmd, CutoutParams& p)
{
    cmd->add_option("--alpha", p.alpha, "P-map likelihood exponent")->capture_default_str();
    cmd->add_option("--b", p.b, "P-map weight schedule numerator (w = b / k)")->capture_default_str();
    cmd->add_option("--iters", p.max_iters, "maximum iterations")->capture_default_str();
    cmd->add_option("--gamma", p.gamma, "smoothness strength")->capture_default_str();
    cmd->add_option("--components", p.K, "GMM components per color model")->capture_default_str();
    cmd->add_option("--converge", p.converge_frac, "stop when fewer than this fraction of pixels change")
        ->capture_default_str();
    cmd->add_option("--seed", p.seed, "GMM initialization seed")->capture_default_str();
}

void add_noise(CLI::App* cmd, OracleNoise& n)
{
    cmd->add_option("--blur", n.blur_radius, "oracle P-map box blur radius")->capture_default_str();
    cmd->add_option("--flip", n.flip_noise, "oracle P-map uniform noise amplitude")->capture_default_str();
    cmd->add_option("--leak", n.leak, "oracle P-map value painted over distractors")->capture_default_str();
    cmd->add_option("--noise-seed", n.seed, "oracle P-map noise seed")->capture_default_str();
}

void write_text(const fs::path& path, const std::string& text)
{
    write_file(path, ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

json trace_json(const CutoutTrace& trace)
{
    json out = json::array();
    for (const auto& it : trace.iterations)
        out.push_back({{"k", it.k}, {"w", it.w}, {"energy", it.energy}, {"changed_pixels", it.changed_pixels}});
    return out;
}

struct CutoutArgs {
    std::string image, pmap, rect, out, gt, trace;
    CutoutParams params;
};

int run_cutout(const CutoutArgs& a, bool with_pmap)
{
    const RgbImage image = decode_image(read_file(a.image));
    const RectProposal rect = *parse_rect(a.rect);
    if (!rect.inside(image.width(), image.height()))
        throw Error(ErrorCode::OutOfBounds, "rect " + a.rect + " is not inside the " + std::to_string(image.width()) +
                                                "x" + std::to_string(image.height()) + " image");
    a.params.validate();
    const auto start = std::chrono::steady_clock::now();
    CutoutResult result;
    CutoutMask mask;
    if (with_pmap) {
        const ProbMap pmap = decode_pmap(read_file(a.pmap));
        if (pmap.width() != image.width() || pmap.height() != image.height())
            throw Error(ErrorCode::DimensionMismatch, "P-map and image sizes differ");
        result = pmap_grabcut(crop(image, rect), crop(pmap, rect), a.params);
        mask = embed(result.mask, rect, image.width(), image.height());
    } else {
        result = plain_grabcut(image, rect, a.params);
        mask = result.mask;
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    write_file(a.out, encode_mask(mask));

    json summary{{"out", a.out}, {"iterations", result.trace.iterations.size()}, {"timing_ms", ms},
                 {"foreground_pixels", mask.fg_count()}};
    if (!a.gt.empty())
        summary["iou"] = mask_iou(mask, decode_mask(read_file(a.gt)));
    if (!a.trace.empty()) {
        write_text(a.trace, trace_json(result.trace).dump(2) + '\n');
        summary["trace"] = a.trace;
    }
    std::cout << summary.dump() << '\n';
    return kExitOk;
}

struct SynthArgs {
    SceneSpec spec;
    std::string background = "flat";
    OracleNoise noise;
    std::string out;
};

int run_synth(SynthArgs a)
{
    a.spec.background = parse_background(a.background);
    const SynthScene scene = gen_scene(a.spec);
    const int W = scene.image.width(), H = scene.image.height();
    fs::create_directories(a.out);
    const fs::path dir(a.out);
    write_file(dir / "scene.png", encode_png(scene.image));

    json targets = json::array();
    const BenchOptions crop;
    for (std::size_t t = 0; t < scene.gt_masks.size(); ++t) {
        std::vector<CutoutMask> others = scene.distractor_masks;
        for (std::size_t u = 0; u < scene.gt_masks.size(); ++u)
            if (u != t)
                others.push_back(scene.gt_masks[u]);
        const std::string mask_name = "target_" + std::to_string(t) + "_mask.pgm";
        const std::string pmap_name = "target_" + std::to_string(t) + "_pmap.pgm";
        write_file(dir / mask_name, encode_mask(scene.gt_masks[t]));
        write_file(dir / pmap_name, encode_pmap(oracle_pmap(scene.gt_masks[t], others, a.noise)));
        const RectProposal& g = scene.gt_rects[t];
        const int margin =
            std::max(crop.min_margin, static_cast<int>(std::lround(crop.margin_frac * std::max(g.w, g.h))));
        targets.push_back({{"rect", g},
                           {"suggested_rect", pad_rect(g, margin, W, H)},
                           {"mask", mask_name},
                           {"pmap", pmap_name}});
    }
    json distractors = json::array();
    for (std::size_t d = 0; d < scene.distractor_rects.size(); ++d)
        distractors.push_back({{"rect", scene.distractor_rects[d]}, {"lookalike", scene.distractor_lookalike[d]}});
    const json manifest{{"spec", a.spec},       {"oracle", a.noise},         {"image", "scene.png"},
                        {"targets", targets},   {"distractors", distractors}};
    write_text(dir / "manifest.json", manifest.dump(2) + '\n');
    std::cout << json{{"out", a.out}, {"targets", targets.size()}, {"distractors", distractors.size()}}.dump()
              << '\n';
    return kExitOk;
}

struct DetectArgs {
    int scenes = 20;
    std::uint64_t first_seed = 100;
    std::string mode = "rgbp";
    std::string model;
    OracleNoise noise{2, 0.05, 0.15, 11};
    DetectorOptions options;
    // score
    std::string image, pmap, proposals, aggregate;
    std::vector<int> scales{40, 56, 72, 96};
    int top = 10;
    double nms_iou = 0.5;
};

int run_detect_train(DetectArgs a)
{
    a.options.mode = parse_feature_mode(a.mode);
    const ProposalCorpus corpus = build_corpus(proposal_grid(a.scenes, a.first_seed), a.noise);
    spdlog::info("training {} detector on {} proposals", a.mode, corpus.items.size());
    const Detector det = train_detector(corpus, a.options);
    save_detector(det, a.model);
    std::cout << json{{"model", a.model},
                      {"mode", a.mode},
                      {"proposals", corpus.items.size()},
                      {"train_balanced_recall", balanced_recall(evaluate_detector(det, corpus))}}
                     .dump()
              << '\n';
    return kExitOk;
}

int run_detect_eval(const DetectArgs& a)
{
    const Detector det = load_detector(a.model);
    const ProposalCorpus corpus = build_corpus(proposal_grid(a.scenes, a.first_seed), a.noise);
    std::cout << json{{"model", a.model},
                      {"mode", to_string(det.mode)},
                      {"proposals", corpus.items.size()},
                      {"balanced_recall", balanced_recall(evaluate_detector(det, corpus))}}
                     .dump()
              << '\n';
    return kExitOk;
}

int run_detect_score(const DetectArgs& a)
{
    const Detector det = load_detector(a.model);
    const RgbImage image = decode_image(read_file(a.image));
    const ProbMap pmap = a.pmap.empty() ? ProbMap::zeros(image.width(), image.height()) : decode_pmap(read_file(a.pmap));
    if (det.mode == FeatureMode::RgbP && a.pmap.empty())
        throw Error(ErrorCode::InvalidArgument, "an RGB-P model needs --pmap");
    static constexpr double kRatios[] = {0.75, 1.0, 1.33};
    const std::vector<RectProposal> props =
        a.proposals.empty() ? gen_proposals(image, a.scales, 0.5, kRatios) : load_proposals(a.proposals);
    std::vector<Detection> dets = nms(rank_proposals(det, image, pmap, props), a.nms_iou);
    if (a.top > 0 && static_cast<int>(dets.size()) > a.top)
        dets.resize(static_cast<std::size_t>(a.top));
    std::vector<AggregateEntry> entries;
    for (const auto& d : dets) {
        json line = d.rect;
        line["score"] = d.score;
        line["confidence"] = score_confidence(d.score);
        std::cout << line.dump() << '\n';
        entries.push_back({d.rect, crop(pmap, d.rect), score_confidence(d.score)});
    }
    if (!a.aggregate.empty())
        write_file(a.aggregate, encode_pmap(aggregate_pmap(image.width(), image.height(), entries)));
    return kExitOk;
}

struct BenchArgs {
    int scenes = 50;
    std::uint64_t first_seed = 1;
    std::string grid = "clutter";
    std::vector<std::string> methods{"pmap", "plain"};
    OracleNoise noise{2, 0.05, 0.15, 7};
    CutoutParams params;
    int threads = 0;
    std::string out = ".";
};

int run_bench(const BenchArgs& a)
{
    std::vector<SceneSpec> grid;
    if (a.grid == "clutter")
        grid = clutter_grid(a.scenes, a.first_seed);
    else if (a.grid == "easy")
        grid = easy_grid(a.scenes, a.first_seed);
    else
        throw Error(ErrorCode::InvalidArgument, "unknown grid '" + a.grid + "' (clutter or easy)");
    std::vector<Method> methods;
    for (const auto& m : a.methods)
        methods.push_back(parse_method(m));
    BenchOptions options;
    options.threads = a.threads;
    const BenchReport report = run_benchmark(grid, a.noise, a.params, methods, options);
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "report.json", report_json(report) + '\n');
    write_text(fs::path(a.out) / "report.csv", report_csv(report));
    json summary = json::object();
    for (const auto& [method, s] : report.summary)
        summary[std::string(to_string(method))] = {
            {"mean_iou", s.mean_iou}, {"runs", s.runs}, {"failures", s.failures}, {"wins", s.wins}};
    std::cout << summary.dump() << '\n';
    if (!report.all_completed()) {
        spdlog::error("some benchmark runs failed; see report.csv");
        return kExitRuntime;
    }
    return kExitOk;
}

Server* g_server = nullptr;

int run_serve(const ServeOptions& options)
{
    Server server(options);
    server.bind();
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server)
            g_server->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_server)
            g_server->stop();
    });
    server.listen();
    g_server = nullptr;
    return kExitOk;
}

} // namespace

int cli_main(int argc, const char* const* argv)
{
    configure_logging();
    CLI::App app("P-map guided cutout, proposal scoring and benchmarks", "pmapcut");
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic scene, its masks, oracle P-maps and a manifest");
    synth_cmd->add_option("--seed", synth.spec.seed, "scene seed")->capture_default_str();
    synth_cmd->add_option("--width", synth.spec.width)->capture_default_str();
    synth_cmd->add_option("--height", synth.spec.height)->capture_default_str();
    synth_cmd->add_option("--targets", synth.spec.n_targets)->capture_default_str();
    synth_cmd->add_option("--distractors", synth.spec.n_distractors)->capture_default_str();
    synth_cmd->add_option("--overlap", synth.spec.palette_overlap, "fraction of look-alike distractors")
        ->capture_default_str();
    synth_cmd->add_option("--background", synth.background, "flat, gradient or texture")->capture_default_str();
    add_noise(synth_cmd, synth.noise);
    synth_cmd->add_option("--out", synth.out, "output directory")->required();

    CutoutArgs cut;
    auto* cut_cmd = app.add_subcommand("cutout", "P-map guided GrabCut inside a rectangle");
    cut_cmd->add_option("--image", cut.image, "PNG or PPM image")->required()->check(CLI::ExistingFile);
    cut_cmd->add_option("--pmap", cut.pmap, "P-map PGM or PFM, same size as the image")
        ->required()
        ->check(CLI::ExistingFile);
    cut_cmd->add_option("--rect", cut.rect, "x,y,w,h")->required()->check(kRectFormat);
    cut_cmd->add_option("--out", cut.out, "output mask PGM")->required();
    cut_cmd->add_option("--gt", cut.gt, "ground-truth mask; prints IoU")->check(CLI::ExistingFile);
    cut_cmd->add_option("--trace", cut.trace, "write the per-iteration trace as JSON");
    add_params(cut_cmd, cut.params);

    CutoutArgs plain;
    auto* plain_cmd = app.add_subcommand("grabcut", "classic rectangle GrabCut without a P-map");
    plain_cmd->add_option("--image", plain.image, "PNG or PPM image")->required()->check(CLI::ExistingFile);
    plain_cmd->add_option("--rect", plain.rect, "x,y,w,h")->required()->check(kRectFormat);
    plain_cmd->add_option("--out", plain.out, "output mask PGM")->required();
    plain_cmd->add_option("--gt", plain.gt, "ground-truth mask; prints IoU")->check(CLI::ExistingFile);
    plain_cmd->add_option("--trace", plain.trace, "write the per-iteration trace as JSON");
    add_params(plain_cmd, plain.params);

    DetectArgs det;
    auto* det_cmd = app.add_subcommand("detect", "train, evaluate or apply a proposal scorer");
    det_cmd->require_subcommand(1);
    auto* train_cmd = det_cmd->add_subcommand("train", "train on a synthetic proposal corpus");
    train_cmd->add_option("--scenes", det.scenes)->capture_default_str();
    train_cmd->add_option("--first-seed", det.first_seed)->capture_default_str();
    train_cmd->add_option("--mode", det.mode, "rgb or rgbp")->capture_default_str();
    train_cmd->add_option("--lambda", det.options.svm.lambda, "SVM regularization")->capture_default_str();
    train_cmd->add_option("--epochs", det.options.svm.epochs)->capture_default_str();
    train_cmd->add_option("--pca-rank", det.options.pca_rank)->capture_default_str();
    add_noise(train_cmd, det.noise);
    train_cmd->add_option("--out", det.model, "model file")->required();
    auto* eval_cmd = det_cmd->add_subcommand("eval", "balanced recall on a synthetic proposal corpus");
    eval_cmd->add_option("--model", det.model)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--scenes", det.scenes)->capture_default_str();
    eval_cmd->add_option("--first-seed", det.first_seed)->capture_default_str();
    add_noise(eval_cmd, det.noise);
    auto* score_cmd = det_cmd->add_subcommand("score", "rank proposals on an image; JSON lines on stdout");
    score_cmd->add_option("--model", det.model)->required()->check(CLI::ExistingFile);
    score_cmd->add_option("--image", det.image)->required()->check(CLI::ExistingFile);
    score_cmd->add_option("--pmap", det.pmap, "P-map (required for rgbp models)")->check(CLI::ExistingFile);
    score_cmd->add_option("--proposals", det.proposals, "JSON lines; sliding windows when omitted")
        ->check(CLI::ExistingFile);
    score_cmd->add_option("--scales", det.scales, "sliding-window scales")->capture_default_str();
    score_cmd->add_option("--top", det.top, "keep the best N after NMS (0 keeps all)")->capture_default_str();
    score_cmd->add_option("--nms", det.nms_iou, "NMS IoU threshold")->capture_default_str();
    score_cmd->add_option("--aggregate", det.aggregate, "write the confidence-weighted P-map aggregate");

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "P-map vs plain GrabCut on a seeded scene grid");
    bench_cmd->add_option("--scenes", bench.scenes)->capture_default_str();
    bench_cmd->add_option("--first-seed", bench.first_seed)->capture_default_str();
    bench_cmd->add_option("--grid", bench.grid, "clutter or easy")->capture_default_str();
    bench_cmd->add_option("--methods", bench.methods, "pmap and/or plain")->capture_default_str()->delimiter(',');
    bench_cmd->add_option("--threads", bench.threads, "worker threads (0 = hardware)")->capture_default_str();
    bench_cmd->add_option("--out", bench.out, "directory for report.json and report.csv")->capture_default_str();
    add_noise(bench_cmd, bench.noise);
    add_params(bench_cmd, bench.params);

    ServeOptions serve;
    auto* serve_cmd = app.add_subcommand("serve", "HTTP service for the interactive frontend");
    serve_cmd->add_option("--port", serve.port)->capture_default_str();
    serve_cmd->add_option("--bind", serve.bind_address)->capture_default_str();
    serve_cmd->add_option("--threads", serve.threads)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth_cmd->parsed())
            return run_synth(synth);
        if (cut_cmd->parsed())
            return run_cutout(cut, true);
        if (plain_cmd->parsed())
            return run_cutout(plain, false);
        if (train_cmd->parsed())
            return run_detect_train(det);
        if (eval_cmd->parsed())
            return run_detect_eval(det);
        if (score_cmd->parsed())
            return run_detect_score(det);
        if (bench_cmd->parsed())
            return run_bench(bench);
        return run_serve(serve);
    } catch (const Error& e) {
        std::cerr << json{{"error", to_string(e.code())}, {"detail", e.detail()}}.dump() << '\n';
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "Internal"}, {"detail", e.what()}}.dump() << '\n';
    }
    return kExitRuntime;
}

} // namespace pmapcut
