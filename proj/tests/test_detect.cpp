#include "doctest.h"

#include <cmath>

#include "pmapcut/detect.hpp"
#include "pmapcut/error.hpp"
#include "pmapcut/rng.hpp"

using namespace pmapcut;

namespace {

template <class F>
ErrorCode code_of(F&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::NotFound;
}

RgbImage solid(int w, int h, std::uint8_t v = 100)
{
    RgbImage img(w, h);
    img.pixels().setConstant(v);
    return img;
}

ProbMap constant_pmap(int w, int h, double v) { return ProbMap(Raster<double>::Constant(h, w, v)); }

const ProposalCorpus& tiny_corpus()
{
    static const ProposalCorpus corpus = [] {
        CorpusOptions opts;
        opts.per_scene = 40;
        return build_corpus(proposal_grid(3, 70), OracleNoise{2, 0.05, 0.15, 3}, opts);
    }();
    return corpus;
}

DetectorOptions tiny_options(FeatureMode mode)
{
    DetectorOptions o;
    o.mode = mode;
    o.pca_rank = 8;
    o.pca_samples = 60;
    o.svm.epochs = 5;
    return o;
}

} // namespace

TEST_SUITE("detect") {

TEST_CASE("gen_proposals examples")
{
    const std::vector<int> s64{64};
    const std::vector<double> square{1.0};
    CHECK(gen_proposals(solid(64, 64), s64, 0.5, square).size() == 1);

    const auto wide = gen_proposals(solid(128, 64), s64, 0.5, square);
    REQUIRE(wide.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(wide[static_cast<std::size_t>(i)].x == 32 * i);
        CHECK(wide[static_cast<std::size_t>(i)].y == 0);
        CHECK(wide[static_cast<std::size_t>(i)].w == 64);
    }

    const std::vector<int> s65{65};
    CHECK(code_of([&] { gen_proposals(solid(64, 64), s65, 0.5, square); }) == ErrorCode::ScaleTooLarge);

    const std::vector<int> s40{40};
    const std::vector<double> tall{0.5};
    for (const auto& p : gen_proposals(solid(100, 80), s40, 0.25, tall)) {
        CHECK(p.w == 28);
        CHECK(p.h == 57);
        CHECK(p.inside(100, 80));
    }
}

TEST_CASE("parse_proposals: JSON lines")
{
    const auto props = parse_proposals("{\"x\":1,\"y\":2,\"w\":3,\"h\":4}\n\n{\"x\":0,\"y\":0,\"w\":5,\"h\":5,\"confidence\":0.7}\n");
    REQUIRE(props.size() == 2);
    CHECK(props[0].x == 1);
    CHECK(props[0].h == 4);
    CHECK(!props[0].confidence);
    CHECK(props[1].confidence == 0.7);
    CHECK(parse_proposals("").empty());
    CHECK(code_of([] { parse_proposals("{\"x\":0,\"y\":0,\"w\":0,\"h\":5}"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { parse_proposals("{\"x\":0,\"y\":0,\"w\":2}"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { parse_proposals("not json"); }) == ErrorCode::ParseError);
}

TEST_CASE("label_samples uses IoU strictly above the threshold")
{
    const std::vector<RectProposal> gt{{10, 10, 20, 20, {}}};
    const std::vector<RectProposal> props{{10, 10, 20, 20, {}}, {11, 10, 20, 20, {}}, {13, 10, 20, 20, {}}, {60, 60, 5, 5, {}}};
    const auto labels = label_samples(props, gt);
    CHECK(labels == std::vector<bool>{true, true, false, false});
    CHECK(label_samples(props, {}) == std::vector<bool>(4, false));
}

TEST_CASE("property: raising the labeling threshold never adds positives")
{
    Rng rng(4);
    std::vector<RectProposal> props, gt{{20, 20, 30, 30, {}}, {50, 10, 20, 40, {}}};
    for (int i = 0; i < 300; ++i)
        props.push_back({static_cast<int>(rng.uniform_int(0, 60)), static_cast<int>(rng.uniform_int(0, 40)),
                         static_cast<int>(rng.uniform_int(5, 40)), static_cast<int>(rng.uniform_int(5, 40)), {}});
    for (double t = 0.0; t < 1.0; t += 0.1) {
        const auto lo = label_samples(props, gt, t), hi = label_samples(props, gt, t + 0.1);
        for (std::size_t i = 0; i < props.size(); ++i)
            CHECK((!hi[i] || lo[i]));
    }
}

TEST_CASE("HoG dimension")
{
    CHECK(HogConfig{}.dimension() == 1764);
    for (const auto& [cell, block, bins, patch] : {std::tuple{8, 2, 9, 64}, {4, 3, 6, 32}, {16, 1, 12, 48}}) {
        const HogConfig cfg{cell, block, bins, patch, 1.0};
        const int blocks = patch / cell - block + 1;
        CHECK(cfg.dimension() == blocks * blocks * block * block * bins);
        CHECK(hog(Raster<double>::Zero(patch, patch), cfg).size() == cfg.dimension());
    }
    CHECK_THROWS_AS((HogConfig{7, 2, 9, 64, 1.0}.validate()), Error);
    CHECK_THROWS_AS((HogConfig{8, 9, 9, 64, 1.0}.validate()), Error);
}

TEST_CASE("HoG of a constant patch is zero; a vertical edge lands in bin 0")
{
    const HogConfig cfg;
    CHECK(hog(Raster<double>::Constant(64, 64, 0.7), cfg).isZero(0.0));

    Raster<double> step = Raster<double>::Zero(64, 64);
    step.rightCols(32).setConstant(1.0);
    const Eigen::VectorXd h = hog(step, cfg);
    CHECK(h.maxCoeff() > 0.0);
    CHECK(h.minCoeff() >= 0.0);
    for (Eigen::Index i = 0; i < h.size(); ++i)
        if (i % cfg.n_bins != 0)
            CHECK(h(i) == 0.0);
    CHECK(h.maxCoeff() <= 0.2 + 1e-12);
}

TEST_CASE("HoG resamples other patch sizes")
{
    Rng rng(8);
    Raster<double> small(32, 40);
    for (Eigen::Index i = 0; i < small.size(); ++i)
        small.data()[i] = rng.uniform();
    const HogConfig cfg;
    CHECK(hog(small, cfg) == hog(resample_bilinear(small, 64, 64), cfg));
}

TEST_CASE("PCA recovers a line and reconstructs at full rank")
{
    Eigen::MatrixXd line(5, 2);
    line << 0, 0, 1, 1, 2, 2, 3, 3, 4, 4;
    const PcaModel m = pca_fit(line, 1);
    CHECK(m.basis(0, 0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(m.basis(0, 1) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(m.mean(0) == doctest::Approx(2.0));

    Rng rng(5);
    Eigen::MatrixXd x(12, 5);
    for (Eigen::Index i = 0; i < x.size(); ++i)
        x.data()[i] = rng.uniform(-1, 1) * (1 + i % 5);
    const PcaModel full = pca_fit(x, 5);
    CHECK((full.basis * full.basis.transpose()).isIdentity(1e-10));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Eigen::VectorXd v = x.row(i).transpose();
        const Eigen::VectorXd back = full.mean + full.basis.transpose() * pca_project(full, v);
        CHECK((back - v).cwiseAbs().maxCoeff() < 1e-6);
    }
    CHECK(code_of([&] { pca_fit(x, 6); }) == ErrorCode::RankTooHigh);
    CHECK(code_of([&] { pca_fit(x.topRows(3), 3); }) == ErrorCode::RankTooHigh);
    CHECK(code_of([&] { pca_project(full, Eigen::VectorXd::Zero(4)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("property: PCA directions are orthonormal with non-increasing variance")
{
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        // Wide case (n - 1 < d) exercises the Gram route.
        const Eigen::Index n = trial % 2 ? 9 : 40, d = 20;
        Eigen::MatrixXd x(n, d);
        for (Eigen::Index i = 0; i < x.size(); ++i)
            x.data()[i] = rng.uniform(-1, 1);
        const int r = static_cast<int>(std::min<Eigen::Index>(n - 1, d));
        const PcaModel m = pca_fit(x, r);
        CHECK((m.basis * m.basis.transpose()).isIdentity(1e-9));
        const Eigen::MatrixXd proj = (x.rowwise() - m.mean.transpose()) * m.basis.transpose();
        const Eigen::VectorXd var = proj.colwise().squaredNorm().transpose();
        for (int k = 0; k + 1 < r; ++k)
            CHECK(var(k) >= var(k + 1) - 1e-9);
        for (int k = 0; k < r; ++k) {
            Eigen::Index peak;
            m.basis.row(k).cwiseAbs().maxCoeff(&peak);
            CHECK(m.basis(k, peak) > 0.0);
        }
    }
}

TEST_CASE("SVM separates a separable toy set")
{
    Rng rng(9);
    Eigen::MatrixXd x(60, 2);
    std::vector<int> y;
    for (int i = 0; i < 60; ++i) {
        const int label = i < 15 ? 1 : -1; // imbalanced on purpose
        x.row(i) << label * 2 + rng.uniform(-1, 1), label * 2 + rng.uniform(-1, 1);
        y.push_back(label);
    }
    const SvmOptions opts;
    const LinearSvm m = svm_train(x, y, opts);
    std::vector<LabeledPrediction> preds;
    for (int i = 0; i < 60; ++i)
        preds.push_back({svm_score(m, x.row(i).transpose()) > 0, y[static_cast<std::size_t>(i)] > 0});
    CHECK(balanced_recall(preds) == 1.0);

    const LinearSvm zero{Eigen::VectorXd::Zero(2), 0.0};
    CHECK(svm_objective(m, x, y, opts) <= svm_objective(zero, x, y, opts));
    CHECK(svm_score(LinearSvm{Eigen::VectorXd::Zero(2), -0.25}, Eigen::Vector2d(5, 7)) == -0.25);

    const LinearSvm again = svm_train(x, y, opts);
    CHECK(again.weights == m.weights);
    CHECK(again.bias == m.bias);
}

TEST_CASE("SVM input errors")
{
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 3);
    const std::vector<int> same{1, 1, 1, 1};
    CHECK(code_of([&] { svm_train(x, same); }) == ErrorCode::SingleClass);
    const std::vector<int> bad{1, 0, -1, 1};
    CHECK(code_of([&] { svm_train(x, bad); }) == ErrorCode::InvalidArgument);
    const std::vector<int> short_labels{1, -1};
    CHECK(code_of([&] { svm_train(x, short_labels); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("RGB-P features: length and locality")
{
    Rng rng(10);
    RgbImage patch(40, 30);
    for (Eigen::Index i = 0; i < patch.pixels().size(); ++i)
        patch.pixels().data()[i] = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    const HogConfig cfg;
    Eigen::MatrixXd samples(6, cfg.dimension());
    for (Eigen::Index i = 0; i < samples.size(); ++i)
        samples.data()[i] = rng.uniform();
    const PcaModel pca = pca_fit(samples, 4);

    const Eigen::VectorXd rgb_only = build_rgbp_features(patch, constant_pmap(40, 30, 0.0), cfg, nullptr);
    CHECK(rgb_only.size() == 1764 + 48);
    CHECK(rgb_only.tail(48).sum() == doctest::Approx(3.0));

    Raster<double> blob = Raster<double>::Zero(30, 40);
    blob.block(8, 10, 14, 20).setConstant(1.0);
    const Eigen::VectorXd a = build_rgbp_features(patch, constant_pmap(40, 30, 0.0), cfg, &pca);
    const Eigen::VectorXd b = build_rgbp_features(patch, ProbMap(blob), cfg, &pca);
    CHECK(a.size() == 1764 + 48 + 4);
    CHECK(a.head(rgb_only.size()) == rgb_only);
    CHECK(b.head(rgb_only.size()) == rgb_only);
    CHECK(a.tail(4) != b.tail(4));
    CHECK(code_of([&] { build_rgbp_features(patch, constant_pmap(30, 30, 0.0), cfg, &pca); }) ==
          ErrorCode::DimensionMismatch);
}

TEST_CASE("corpus is deterministic and labels agree with label_samples")
{
    const ProposalCorpus& c = tiny_corpus();
    CHECK(c.images.size() == 3);
    CHECK(c.items.size() == 120);
    int pos = 0;
    for (const auto& item : c.items) {
        CHECK(item.rect.inside(c.images[item.image].width(), c.images[item.image].height()));
        const std::vector<RectProposal> one{item.rect};
        CHECK(label_samples(one, c.gt_rects[item.image])[0] == item.positive);
        pos += item.positive;
    }
    CHECK(pos > 0);
    CHECK(pos < 120);
    CorpusOptions opts;
    opts.per_scene = 40;
    const ProposalCorpus again = build_corpus(proposal_grid(3, 70), OracleNoise{2, 0.05, 0.15, 3}, opts);
    for (std::size_t i = 0; i < c.items.size(); ++i)
        CHECK(again.items[i].rect == c.items[i].rect);
}

TEST_CASE("detector model round-trips bit-exactly")
{
    for (const FeatureMode mode : {FeatureMode::Rgb, FeatureMode::RgbP}) {
        const ProposalCorpus& c = tiny_corpus();
        const Detector det = train_detector(c, tiny_options(mode));
        const Bytes bytes = encode_detector(det);
        const Detector back = decode_detector(bytes);
        CHECK(back.mode == mode);
        CHECK(encode_detector(back) == bytes);
        for (std::size_t i = 0; i < c.items.size(); i += 7) {
            const auto& item = c.items[i];
            CHECK(back.score(c.images[item.image], c.pmaps[item.image], item.rect) ==
                  det.score(c.images[item.image], c.pmaps[item.image], item.rect));
        }

        Bytes truncated(bytes.begin(), bytes.end() - 3);
        CHECK(code_of([&] { decode_detector(truncated); }) == ErrorCode::CorruptData);
        Bytes bad_magic = bytes;
        bad_magic[0] = 'X';
        CHECK(code_of([&] { decode_detector(bad_magic); }) == ErrorCode::UnsupportedFormat);
        Bytes bad_version = bytes;
        bad_version[8] = 9;
        CHECK(code_of([&] { decode_detector(bad_version); }) == ErrorCode::UnsupportedFormat);
    }
}

TEST_CASE("rank_proposals sorts by descending score")
{
    const ProposalCorpus& c = tiny_corpus();
    const Detector det = train_detector(c, tiny_options(FeatureMode::RgbP));
    std::vector<RectProposal> props;
    for (const auto& item : c.items)
        if (item.image == 0)
            props.push_back(item.rect);
    const auto ranked = rank_proposals(det, c.images[0], c.pmaps[0], props);
    REQUIRE(ranked.size() == props.size());
    for (std::size_t i = 1; i < ranked.size(); ++i)
        CHECK(ranked[i - 1].score >= ranked[i].score);
}

TEST_CASE("nms keeps the best of overlapping boxes")
{
    const std::vector<Detection> dets{{{0, 0, 10, 10, {}}, 0.5},
                                      {{1, 0, 10, 10, {}}, 0.9},
                                      {{30, 30, 10, 10, {}}, 0.1},
                                      {{5, 0, 10, 10, {}}, 0.3}};
    const auto kept = nms(dets, 0.5);
    REQUIRE(kept.size() == 3);
    CHECK(kept[0].score == 0.9);
    CHECK(kept[1].score == 0.3);
    CHECK(kept[2].score == 0.1);
    CHECK(score_confidence(0.0) == 0.5);
    CHECK(score_confidence(3.0) > score_confidence(1.0));
}

TEST_CASE("aggregate_pmap examples")
{
    Raster<double> local(4, 6);
    for (Eigen::Index i = 0; i < local.size(); ++i)
        local.data()[i] = static_cast<double>(i % 5) / 4.0;
    const RectProposal r{3, 2, 6, 4, {}};
    const std::vector<AggregateEntry> single{{r, ProbMap(local), 1.0}};
    const ProbMap one = aggregate_pmap(12, 10, single);
    CHECK(one.values().maxCoeff() == 1.0);
    CHECK((one.values().block(2, 3, 4, 6) == local).all());

    const std::vector<AggregateEntry> stacked{{r, ProbMap(local), 1.0}, {r, ProbMap(local), 3.0}};
    CHECK(aggregate_pmap(12, 10, stacked).values().isApprox(one.values(), 1e-15));

    CHECK(aggregate_pmap(12, 10, {}).values().isZero(0.0));
    const std::vector<AggregateEntry> silent{{r, ProbMap(local), 0.0}};
    CHECK(aggregate_pmap(12, 10, silent).values().isZero(0.0));

    const std::vector<AggregateEntry> outside{{{8, 8, 6, 4, {}}, ProbMap(local), 1.0}};
    CHECK(code_of([&] { aggregate_pmap(12, 10, outside); }) == ErrorCode::OutOfBounds);
    const std::vector<AggregateEntry> wrong{{{0, 0, 4, 4, {}}, ProbMap(local), 1.0}};
    CHECK(code_of([&] { aggregate_pmap(12, 10, wrong); }) == ErrorCode::DimensionMismatch);
    const std::vector<AggregateEntry> negative{{r, ProbMap(local), -1.0}};
    CHECK(code_of([&] { aggregate_pmap(12, 10, negative); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("property: aggregate_pmap is confidence-scale invariant and zero outside proposals")
{
    Rng rng(12);
    for (int trial = 0; trial < 40; ++trial) {
        const int W = 30, H = 20;
        std::vector<AggregateEntry> entries;
        Raster<bool> covered = Raster<bool>::Constant(H, W, false);
        const int count = static_cast<int>(rng.uniform_int(1, 5));
        for (int e = 0; e < count; ++e) {
            const int w = static_cast<int>(rng.uniform_int(1, 12)), h = static_cast<int>(rng.uniform_int(1, 10));
            const RectProposal rect{static_cast<int>(rng.uniform_int(0, W - w)),
                                    static_cast<int>(rng.uniform_int(0, H - h)), w, h, {}};
            Raster<double> local(h, w);
            for (Eigen::Index i = 0; i < local.size(); ++i)
                local.data()[i] = rng.uniform();
            entries.push_back({rect, ProbMap(local), rng.uniform(0.1, 1.0)});
            covered.block(rect.y, rect.x, h, w).setConstant(true);
        }
        const ProbMap base = aggregate_pmap(W, H, entries);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                if (!covered(y, x))
                    CHECK(base(x, y) == 0.0);
        CHECK(base.values().maxCoeff() == 1.0);

        const double pow2 = std::ldexp(1.0, static_cast<int>(rng.uniform_int(-6, 6)));
        const double any = rng.uniform(0.01, 50.0);
        auto scaled = [&](double s) {
            std::vector<AggregateEntry> out = entries;
            for (auto& e : out)
                e.confidence *= s;
            return aggregate_pmap(W, H, out);
        };
        CHECK((scaled(pow2).values() == base.values()).all());
        CHECK(scaled(any).values().isApprox(base.values(), 1e-14));
    }
}

} // TEST_SUITE
