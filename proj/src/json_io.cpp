#include "pmapcut/json_io.hpp"

#include <algorithm>
#include <initializer_list>
#include <string>
#include <string_view>

#include "pmapcut/error.hpp"

namespace pmapcut {

namespace {

using nlohmann::json;

void require_object(const json& j, std::initializer_list<std::string_view> known, std::string_view what)
{
    if (!j.is_object())
        throw json::type_error::create(302, std::string(what) + " must be an object", &j);
    for (const auto& [key, value] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw Error(ErrorCode::InvalidArgument, "unknown field '" + key + "' in " + std::string(what));
}

template <class T>
void take(const json& j, const char* key, T& out)
{
    if (const auto it = j.find(key); it != j.end())
        out = it->template get<T>();
}

} // namespace

void to_json(json& j, const RectProposal& r)
{
    j = json{{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}};
    if (r.confidence)
        j["confidence"] = *r.confidence;
}

void from_json(const json& j, RectProposal& r)
{
    require_object(j, {"x", "y", "w", "h", "confidence"}, "rect");
    r.x = j.at("x").get<int>();
    r.y = j.at("y").get<int>();
    r.w = j.at("w").get<int>();
    r.h = j.at("h").get<int>();
    if (const auto it = j.find("confidence"); it != j.end() && !it->is_null())
        r.confidence = it->get<double>();
}

void to_json(json& j, const SceneSpec& s)
{
    j = json{{"width", s.width},
             {"height", s.height},
             {"n_targets", s.n_targets},
             {"n_distractors", s.n_distractors},
             {"palette_overlap", s.palette_overlap},
             {"background", to_string(s.background)},
             {"seed", s.seed}};
}

void from_json(const json& j, SceneSpec& s)
{
    require_object(j, {"width", "height", "n_targets", "n_distractors", "palette_overlap", "background", "seed"},
                   "scene spec");
    take(j, "width", s.width);
    take(j, "height", s.height);
    take(j, "n_targets", s.n_targets);
    take(j, "n_distractors", s.n_distractors);
    take(j, "palette_overlap", s.palette_overlap);
    take(j, "seed", s.seed);
    if (const auto it = j.find("background"); it != j.end())
        s.background = parse_background(it->get<std::string>());
}

void to_json(json& j, const OracleNoise& n)
{
    j = json{{"blur_radius", n.blur_radius}, {"flip_noise", n.flip_noise}, {"leak", n.leak}, {"seed", n.seed}};
}

void from_json(const json& j, OracleNoise& n)
{
    require_object(j, {"blur_radius", "flip_noise", "leak", "seed"}, "oracle");
    take(j, "blur_radius", n.blur_radius);
    take(j, "flip_noise", n.flip_noise);
    take(j, "leak", n.leak);
    take(j, "seed", n.seed);
}

void to_json(json& j, const CutoutParams& p)
{
    j = json{{"alpha", p.alpha},         {"b", p.b},
             {"max_iters", p.max_iters}, {"gamma", p.gamma},
             {"K", p.K},                 {"eps_prob", p.eps_prob},
             {"converge_frac", p.converge_frac}, {"seed", p.seed}};
}

void from_json(const json& j, CutoutParams& p)
{
    require_object(j, {"alpha", "b", "max_iters", "gamma", "K", "eps_prob", "converge_frac", "seed"}, "params");
    take(j, "alpha", p.alpha);
    take(j, "b", p.b);
    take(j, "max_iters", p.max_iters);
    take(j, "gamma", p.gamma);
    take(j, "K", p.K);
    take(j, "eps_prob", p.eps_prob);
    take(j, "converge_frac", p.converge_frac);
    take(j, "seed", p.seed);
}

} // namespace pmapcut
