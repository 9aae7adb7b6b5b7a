#include "pmapcut/service.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <chrono>
#include <cstdlib>
#include <optional>
#include <thread>
#include <vector>

#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "httplib.h"
#include "json.hpp"

#include "pmapcut/cutout.hpp"
#include "pmapcut/eval.hpp"
#include "pmapcut/json_io.hpp"
#include "pmapcut/synth.hpp"

namespace pmapcut {

using nlohmann::json;

// ---------------------------------------------------------------- base64

std::string base64_encode(ByteView bytes)
{
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    if (!bytes.empty())
        EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
    return out;
}

Bytes base64_decode(std::string_view text)
{
    if (text.size() % 4 != 0)
        throw Error(ErrorCode::ParseError, "base64 length is not a multiple of 4");
    std::size_t pad = 0;
    while (pad < 2 && pad < text.size() && text[text.size() - 1 - pad] == '=')
        ++pad;
    for (std::size_t i = 0; i < text.size() - pad; ++i) {
        const char c = text[i];
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/'))
            throw Error(ErrorCode::ParseError, "invalid base64 character at offset " + std::to_string(i));
    }
    Bytes out(3 * text.size() / 4);
    if (text.empty())
        return out;
    if (EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                        static_cast<int>(text.size())) < 0)
        throw Error(ErrorCode::ParseError, "invalid base64");
    out.resize(out.size() - pad);
    return out;
}

// ---------------------------------------------------------------- handlers

int http_status(ErrorCode code)
{
    switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::CorruptData:
    case ErrorCode::UnsupportedFormat:
        return 400;
    case ErrorCode::OutOfBounds:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::InvalidArgument:
    case ErrorCode::ValueOutOfRange:
    case ErrorCode::EmptyInput:
    case ErrorCode::EmptyForeground:
    case ErrorCode::EmptyBackground:
    case ErrorCode::PlacementFailed:
    case ErrorCode::ScaleTooLarge:
        return 422;
    default:
        return 500;
    }
}

namespace {

HttpReply error_reply(int status, std::string_view code, std::string_view detail)
{
    return {status, json{{"error", code}, {"detail", detail}}.dump()};
}

template <class F>
HttpReply guarded(F&& handler)
{
    try {
        return handler();
    } catch (const Error& e) {
        return error_reply(http_status(e.code()), to_string(e.code()), e.detail());
    } catch (const json::exception& e) {
        return error_reply(400, to_string(ErrorCode::ParseError), e.what());
    } catch (const std::exception& e) {
        spdlog::error("internal error: {}", e.what());
        return error_reply(500, "Internal", e.what());
    }
}

json parse_object(std::string_view body, std::initializer_list<std::string_view> known)
{
    json j = json::parse(body.begin(), body.end(), nullptr, false);
    if (j.is_discarded())
        throw Error(ErrorCode::ParseError, "request body is not valid JSON");
    if (!j.is_object())
        throw Error(ErrorCode::ParseError, "request body must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw Error(ErrorCode::InvalidArgument, "unknown field '" + key + "'");
    return j;
}

Bytes binary_field(const json& j, const char* key)
{
    if (!j.contains(key))
        throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
    return base64_decode(j.at(key).get<std::string>());
}

std::string encode_b64(const Bytes& bytes) { return base64_encode(bytes); }

void require_size(int width, int height, int w, int h, std::string_view what)
{
    if (width != w || height != h)
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + " is " + std::to_string(w) + "x" +
                                                      std::to_string(h) + ", image is " + std::to_string(width) +
                                                      "x" + std::to_string(height));
}

std::vector<CutoutMask> distractor_masks(const json& req, int width, int height)
{
    std::vector<CutoutMask> out;
    if (const auto it = req.find("distractors"); it != req.end())
        for (const auto& item : *it) {
            out.push_back(decode_mask(base64_decode(item.get<std::string>())));
            require_size(width, height, out.back().width(), out.back().height(), "distractor mask");
        }
    return out;
}

OracleNoise oracle_noise(const json& req)
{
    return req.contains("oracle") ? req.at("oracle").get<OracleNoise>() : OracleNoise{};
}

} // namespace

HttpReply handle_health() { return {200, json{{"status", "ok"}}.dump()}; }

HttpReply handle_cutout(std::string_view body)
{
    return guarded([&] {
        const json req = parse_object(
            body, {"image", "rect", "mode", "pmap", "oracle", "gt", "distractors", "params", "trace_masks"});
        const RgbImage image = decode_image(binary_field(req, "image"));
        const int W = image.width(), H = image.height();
        if (!req.contains("rect"))
            throw Error(ErrorCode::ParseError, "missing field 'rect'");
        const auto rect = req.at("rect").get<RectProposal>();
        if (!rect.inside(W, H))
            throw Error(ErrorCode::OutOfBounds, "rect (" + std::to_string(rect.x) + "," + std::to_string(rect.y) +
                                                    "," + std::to_string(rect.w) + "," + std::to_string(rect.h) +
                                                    ") is not inside the " + std::to_string(W) + "x" +
                                                    std::to_string(H) + " image");
        const auto params = req.value("params", json::object()).get<CutoutParams>();
        params.validate();
        const Method mode = parse_method(req.value("mode", std::string("pmap")));
        const bool trace_masks = req.value("trace_masks", false);

        std::optional<CutoutMask> gt;
        if (req.contains("gt")) {
            gt = decode_mask(binary_field(req, "gt"));
            require_size(W, H, gt->width(), gt->height(), "gt mask");
        }
        const bool has_pmap = req.contains("pmap"), has_oracle = req.contains("oracle");

        const auto start = std::chrono::steady_clock::now();
        CutoutResult result;
        // P-map mode runs on the rect crop; its masks are placed back on the full canvas.
        auto place = [&](const CutoutMask& m) { return mode == Method::PmapGrabcut ? embed(m, rect, W, H) : m; };
        if (mode == Method::PmapGrabcut) {
            if (has_pmap == has_oracle)
                throw Error(ErrorCode::InvalidArgument, "pmap mode needs exactly one of 'pmap' or 'oracle'");
            std::optional<ProbMap> pmap;
            if (has_pmap) {
                pmap = decode_pmap(binary_field(req, "pmap"));
                require_size(W, H, pmap->width(), pmap->height(), "pmap");
            } else {
                if (!gt)
                    throw Error(ErrorCode::InvalidArgument, "'oracle' needs a 'gt' mask to degrade");
                pmap = oracle_pmap(*gt, distractor_masks(req, W, H), oracle_noise(req));
            }
            result = pmap_grabcut(crop(image, rect), crop(*pmap, rect), params);
        } else {
            if (has_pmap || has_oracle)
                throw Error(ErrorCode::InvalidArgument, "plain mode takes no P-map");
            result = plain_grabcut(image, rect, params);
        }
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

        const CutoutMask mask = place(result.mask);
        json trace = json::array();
        for (const auto& it : result.trace.iterations) {
            json rec{{"k", it.k}, {"w", it.w}, {"energy", it.energy}, {"changed_pixels", it.changed_pixels}};
            if (trace_masks)
                rec["mask"] = encode_b64(encode_mask(place(it.mask)));
            trace.push_back(std::move(rec));
        }
        json resp{{"mode", to_string(mode)}, {"width", W},      {"height", H},         {"rect", rect},
                  {"mask", encode_b64(encode_mask(mask))},      {"trace", trace},      {"timing_ms", ms}};
        resp["iou"] = gt ? json(mask_iou(mask, *gt)) : json(nullptr);
        if (trace_masks && result.trace.initial.width() > 0)
            resp["initial_mask"] = encode_b64(encode_mask(place(result.trace.initial)));
        return HttpReply{200, resp.dump()};
    });
}

HttpReply handle_pmap_oracle(std::string_view body)
{
    return guarded([&] {
        const json req = parse_object(body, {"gt", "distractors", "oracle"});
        const CutoutMask gt = decode_mask(binary_field(req, "gt"));
        const ProbMap pmap = oracle_pmap(gt, distractor_masks(req, gt.width(), gt.height()), oracle_noise(req));
        const json resp{{"width", gt.width()},
                        {"height", gt.height()},
                        {"oracle", oracle_noise(req)},
                        {"pmap", encode_b64(encode_pmap(pmap))}};
        return HttpReply{200, resp.dump()};
    });
}

namespace {

template <class T>
void query_number(const QueryParams& q, std::string_view key, T& out)
{
    const auto it = q.find(key);
    if (it == q.end())
        return;
    const std::string& s = it->second;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || end != s.data() + s.size())
        throw Error(ErrorCode::ParseError, "query parameter '" + std::string(key) + "' is not a number: " + s);
}

} // namespace

HttpReply handle_synth(const QueryParams& query)
{
    return guarded([&] {
        for (const auto& [key, value] : query)
            if (key != "seed" && key != "width" && key != "height" && key != "targets" && key != "distractors" &&
                key != "overlap" && key != "background")
                throw Error(ErrorCode::InvalidArgument, "unknown query parameter '" + key + "'");
        SceneSpec spec;
        spec.n_distractors = 6;
        spec.palette_overlap = 1.0;
        spec.background = BackgroundKind::Texture;
        query_number(query, "seed", spec.seed);
        query_number(query, "width", spec.width);
        query_number(query, "height", spec.height);
        query_number(query, "targets", spec.n_targets);
        query_number(query, "distractors", spec.n_distractors);
        query_number(query, "overlap", spec.palette_overlap);
        if (const auto it = query.find("background"); it != query.end())
            spec.background = parse_background(it->second);

        const SynthScene scene = gen_scene(spec);
        const int W = scene.image.width(), H = scene.image.height();
        const OracleNoise noise{2, 0.05, 0.15, spec.seed};
        const BenchOptions crop_opts;
        json gt_masks = json::array(), distractors = json::array(), pmaps = json::array(), suggested = json::array();
        for (std::size_t t = 0; t < scene.gt_masks.size(); ++t) {
            gt_masks.push_back(encode_b64(encode_mask(scene.gt_masks[t])));
            std::vector<CutoutMask> others = scene.distractor_masks;
            for (std::size_t u = 0; u < scene.gt_masks.size(); ++u)
                if (u != t)
                    others.push_back(scene.gt_masks[u]);
            pmaps.push_back(encode_b64(encode_pmap(oracle_pmap(scene.gt_masks[t], others, noise))));
            const RectProposal& g = scene.gt_rects[t];
            const int margin = std::max(crop_opts.min_margin,
                                        static_cast<int>(std::lround(crop_opts.margin_frac * std::max(g.w, g.h))));
            suggested.push_back(pad_rect(g, margin, W, H));
        }
        for (const auto& m : scene.distractor_masks)
            distractors.push_back(encode_b64(encode_mask(m)));

        const json resp{{"spec", spec},
                        {"image", encode_b64(encode_png(scene.image))},
                        {"gt_masks", gt_masks},
                        {"gt_rects", scene.gt_rects},
                        {"suggested_rects", suggested},
                        {"distractor_masks", distractors},
                        {"distractor_rects", scene.distractor_rects},
                        {"distractor_lookalike", scene.distractor_lookalike},
                        {"oracle", noise},
                        {"pmaps", pmaps}};
        return HttpReply{200, resp.dump()};
    });
}

HttpReply dispatch(std::string_view method, std::string_view path, const QueryParams& query, std::string_view body)
{
    if (body.size() > kMaxRequestBytes)
        return error_reply(413, "PayloadTooLarge", "request body exceeds " + std::to_string(kMaxRequestBytes) + " bytes");
    struct Route {
        std::string_view method;
        std::string_view path;
    };
    static constexpr Route routes[] = {
        {"GET", "/health"}, {"POST", "/cutout"}, {"POST", "/pmap/oracle"}, {"GET", "/synth"}};
    bool path_known = false;
    for (const auto& r : routes) {
        if (r.path != path)
            continue;
        path_known = true;
        if (r.method != method)
            continue;
        if (path == "/health")
            return handle_health();
        if (path == "/cutout")
            return handle_cutout(body);
        if (path == "/pmap/oracle")
            return handle_pmap_oracle(body);
        return handle_synth(query);
    }
    if (path_known)
        return error_reply(405, "MethodNotAllowed", std::string(method) + " is not supported on " + std::string(path));
    return error_reply(404, "NotFound", "no route " + std::string(path));
}

void configure_logging()
{
    if (!spdlog::get("pmapcut"))
        spdlog::set_default_logger(spdlog::stderr_color_mt("pmapcut"));
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("PMAP_CUTOUT_LOG")) {
        const auto level = spdlog::level::from_str(env);
        if (level == spdlog::level::off && std::string_view(env) != "off")
            spdlog::warn("ignoring unknown PMAP_CUTOUT_LOG level '{}'", env);
        else
            spdlog::set_level(level);
    }
}

// ---------------------------------------------------------------- server

struct Server::Impl {
    ServeOptions options;
    httplib::Server http;
};

Server::Server(ServeOptions options) : impl_(std::make_unique<Impl>())
{
    impl_->options = std::move(options);
    auto& http = impl_->http;
    const int threads = impl_->options.threads > 0
                            ? impl_->options.threads
                            : std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
    http.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
    http.set_payload_max_length(kMaxRequestBytes);

    auto route = [](const httplib::Request& req, httplib::Response& res) {
        QueryParams query;
        for (const auto& [key, value] : req.params)
            query.emplace(key, value);
        const HttpReply reply = dispatch(req.method, req.path, query, req.body);
        res.status = reply.status;
        res.set_content(reply.body, "application/json");
    };
    for (const char* path : {"/health", "/synth"}) {
        http.Get(path, route);
        http.Post(path, route);
    }
    for (const char* path : {"/cutout", "/pmap/oracle"}) {
        http.Post(path, route);
        http.Get(path, route);
    }
    // Responses httplib produces on its own (oversized body, unknown route) get the JSON error shape too.
    http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty())
            return;
        const HttpReply reply = res.status == 413 ? error_reply(413, "PayloadTooLarge", "request body too large")
                                : res.status == 404 ? error_reply(404, "NotFound", "no route " + req.path)
                                : res.status < 500  ? error_reply(res.status, "ParseError", "malformed request")
                                                    : error_reply(res.status, "Internal", "internal error");
        res.set_content(reply.body, "application/json");
    });
    http.set_logger([](const httplib::Request& req, const httplib::Response& res) {
        spdlog::info("{} {} -> {} ({} bytes in, {} out)", req.method, req.path, res.status, req.body.size(),
                     res.body.size());
    });
}

Server::~Server() = default;

int Server::bind()
{
    auto& o = impl_->options;
    if (o.port == 0) {
        const int port = impl_->http.bind_to_any_port(o.bind_address);
        if (port < 0)
            throw Error(ErrorCode::IoFailure, "cannot bind to " + o.bind_address);
        o.port = port;
    } else if (!impl_->http.bind_to_port(o.bind_address, o.port)) {
        throw Error(ErrorCode::IoFailure, "cannot bind to " + o.bind_address + ":" + std::to_string(o.port));
    }
    spdlog::info("listening on {}:{}", o.bind_address, o.port);
    return o.port;
}

void Server::listen() { impl_->http.listen_after_bind(); }

void Server::stop() { impl_->http.stop(); }

} // namespace pmapcut
