#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <numeric>

#include "tcs/bev.hpp"
#include "tcs/decode.hpp"
#include "tcs/rng.hpp"

using namespace tcs;

namespace {

// Brute-force local-maxima scan used as the oracle for peak candidates.
std::vector<std::pair<int, int>> brute_force_peaks(const HeatmapSet& maps, double threshold) {
    std::vector<std::pair<int, int>> peaks;
    const int k = maps.k;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const double v = maps.pos[maps.idx(i, j)];
            if (v < threshold) continue;
            bool is_max = true;
            for (int di = -1; di <= 1; ++di) {
                for (int dj = -1; dj <= 1; ++dj) {
                    if (di == 0 && dj == 0) continue;
                    const int ni = i + di, nj = j + dj;
                    if (ni < 0 || ni >= k || nj < 0 || nj >= k) continue;
                    if (maps.pos[maps.idx(ni, nj)] > v) is_max = false;
                }
            }
            if (is_max) peaks.emplace_back(i, j);
        }
    }
    return peaks;
}

// Exhaustive assignment oracle for up to 4 detections/objects: the matching
// that greedy should reproduce for well-separated pairs.
double best_assignment_cost(const std::vector<Detection>& dets,
                            const std::vector<OppState>& gts, double gate) {
    const int nd = static_cast<int>(dets.size());
    const int ng = static_cast<int>(gts.size());
    std::vector<int> perm(ng);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    // Try every injective map from gts to dets (ng <= 4).
    std::vector<int> choice(ng, -1);
    std::function<void(int, double, unsigned)> rec = [&](int g, double cost, unsigned used) {
        if (g == ng) {
            best = std::min(best, cost);
            return;
        }
        rec(g + 1, cost + gate, used);  // leave unmatched, pay the gate
        for (int d = 0; d < nd; ++d) {
            if (used & (1u << d)) continue;
            const double dist = std::hypot(dets[d].x - gts[g].x, dets[d].y - gts[g].y);
            if (dist > gate) continue;
            rec(g + 1, cost + dist, used | (1u << d));
        }
    };
    rec(0, 0.0, 0u);
    return best;
}

}  // namespace

TEST_CASE("decode round trips ground-truth targets", "[decode]") {
    BevConfig bev;
    DecodeConfig cfg;
    const std::vector<OppState> opps = {{2.33, 0.71, 1.2, -0.3, 0.4}};
    const HeatmapSet maps = make_targets(opps, bev);
    const auto dets = decode(maps, cfg, bev);
    REQUIRE(dets.size() == 1);
    CHECK(std::hypot(dets[0].x - opps[0].x, dets[0].y - opps[0].y) <= bev.p / 4.0);
    CHECK(std::abs(dets[0].v_x - opps[0].v_x) <= 1e-9);
    CHECK(std::abs(dets[0].v_y - opps[0].v_y) <= 1e-9);
    CHECK(std::abs(dets[0].theta - opps[0].theta) <= 1e-9);
    CHECK(dets[0].score == 1.0);
}

TEST_CASE("decode without sub-pixel stays within half-cell diagonal", "[decode]") {
    BevConfig bev;
    DecodeConfig cfg;
    cfg.subpixel = false;
    Rng rng(3);
    for (int rep = 0; rep < 100; ++rep) {
        const OppState opp{rng.uniform(0.2, 6.2), rng.uniform(-3.0, 3.0), 0, 0, 0};
        const auto dets = decode(make_targets({opp}, bev), cfg, bev);
        REQUIRE(dets.size() == 1);
        CHECK(std::hypot(dets[0].x - opp.x, dets[0].y - opp.y) <=
              bev.p / std::sqrt(2.0) + 1e-12);
    }
}

TEST_CASE("decode sub-pixel recovery over random states", "[decode]") {
    BevConfig bev;
    DecodeConfig cfg;
    Rng rng(4);
    for (int rep = 0; rep < 500; ++rep) {
        const OppState opp{rng.uniform(0.05, 6.35), rng.uniform(-3.15, 3.15),
                           rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-2, 2)};
        const auto dets = decode(make_targets({opp}, bev), cfg, bev);
        REQUIRE(dets.size() == 1);
        CHECK(std::hypot(dets[0].x - opp.x, dets[0].y - opp.y) <= bev.p / 4.0);
        CHECK(std::abs(dets[0].v_x - opp.v_x) <= 1e-9);
        CHECK(std::abs(dets[0].theta - opp.theta) <= 1e-9);
    }
}

TEST_CASE("decode empty heatmap", "[decode]") {
    BevConfig bev;
    DecodeConfig cfg;
    HeatmapSet maps(bev.k);
    CHECK(decode(maps, cfg, bev).empty());
}

TEST_CASE("decode separates two distinct objects", "[decode]") {
    BevConfig bev;  // sigma 2
    DecodeConfig cfg;
    // Two opponents 10 pixels apart.
    const std::vector<OppState> opps = {{2.05, 0.05, 1.0, 0, 0}, {3.05, 0.05, -1.0, 0, 0}};
    const HeatmapSet maps = make_targets(opps, bev);
    CHECK(brute_force_peaks(maps, cfg.score_threshold).size() == 2);
    const auto dets = decode(maps, cfg, bev);
    REQUIRE(dets.size() == 2);
    // Velocity stays attributable to the right object.
    const bool first_is_near = dets[0].x < dets[1].x;
    const Detection& near_det = first_is_near ? dets[0] : dets[1];
    const Detection& far_det = first_is_near ? dets[1] : dets[0];
    CHECK(std::abs(near_det.v_x - 1.0) <= 1e-9);
    CHECK(std::abs(far_det.v_x + 1.0) <= 1e-9);
}

TEST_CASE("decode NMS and score ordering invariants", "[decode]") {
    BevConfig bev;
    DecodeConfig cfg;
    cfg.max_detections = 4;
    Rng rng(5);
    for (int rep = 0; rep < 30; ++rep) {
        HeatmapSet maps(bev.k);
        for (auto& v : maps.pos) v = rng.uniform(0.0, 1.0);
        const auto dets = decode(maps, cfg, bev);
        CHECK(dets.size() <= 4);
        for (std::size_t a = 0; a < dets.size(); ++a) {
            if (a > 0) CHECK(dets[a - 1].score >= dets[a].score);
            for (std::size_t b = a + 1; b < dets.size(); ++b) {
                const double di = (dets[a].x - dets[b].x) / bev.p;
                const double dj = (dets[a].y - dets[b].y) / bev.p;
                CHECK(std::hypot(di, dj) > cfg.nms_radius - 1.0);  // refined centers
            }
            CHECK(dets[a].score >= cfg.score_threshold);
            CHECK(dets[a].score <= 1.0);
        }
    }
}

TEST_CASE("match basics", "[decode]") {
    std::vector<Detection> dets = {{0.1, 0.0, 0, 0, 0, 1.0}};
    std::vector<OppState> gts = {{0.0, 0.0, 0, 0, 0}};
    const MatchResult res = match(dets, gts, 1.0);
    REQUIRE(res.pairs.size() == 1);
    CHECK(res.pairs[0].first == 0);
    CHECK(res.pairs[0].second == 0);
    CHECK(res.unmatched_dets.empty());
    CHECK(res.unmatched_gts.empty());

    const MatchResult none = match({}, gts, 1.0);
    CHECK(none.pairs.empty());
    REQUIRE(none.unmatched_gts.size() == 1);
}

TEST_CASE("match respects the gate and uniqueness", "[decode]") {
    std::vector<Detection> dets = {{0.0, 0.0, 0, 0, 0, 1.0}, {5.0, 0.0, 0, 0, 0, 1.0}};
    std::vector<OppState> gts = {{0.2, 0.0, 0, 0, 0}, {0.3, 0.0, 0, 0, 0}};
    const MatchResult res = match(dets, gts, 1.0);
    CHECK(res.pairs.size() == 1);  // second det too far; each gt used once
    CHECK(res.unmatched_gts.size() == 1);
    CHECK(res.unmatched_dets.size() == 1);
    for (const auto& [d, g] : res.pairs) {
        CHECK(std::hypot(dets[d].x - gts[g].x, dets[d].y - gts[g].y) <= 1.0);
    }
}

TEST_CASE("greedy matching is near-optimal for separated objects", "[decode]") {
    Rng rng(6);
    for (int rep = 0; rep < 100; ++rep) {
        const int n = 1 + static_cast<int>(rng.uniform_int(3));
        std::vector<OppState> gts;
        for (int i = 0; i < n; ++i) {
            gts.push_back({rng.uniform(-3, 3), rng.uniform(-3, 3), 0, 0, 0});
        }
        std::vector<Detection> dets;
        for (const auto& g : gts) {
            Detection d;
            d.x = g.x + rng.uniform(-0.1, 0.1);
            d.y = g.y + rng.uniform(-0.1, 0.1);
            dets.push_back(d);
        }
        const MatchResult res = match(dets, gts, 1.0);
        double greedy_cost = 0.0;
        for (const auto& [d, g] : res.pairs) {
            greedy_cost += std::hypot(dets[d].x - gts[g].x, dets[d].y - gts[g].y);
        }
        greedy_cost += res.unmatched_gts.size() * 1.0;
        const double optimal = best_assignment_cost(dets, gts, 1.0);
        double min_sep = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < gts.size(); ++a) {
            for (std::size_t b = a + 1; b < gts.size(); ++b) {
                min_sep = std::min(min_sep,
                                   std::hypot(gts[a].x - gts[b].x, gts[a].y - gts[b].y));
            }
        }
        // Greedy nearest-first is exact for <= 2 separated objects; in the
        // crowded general case it stays within a factor of two of optimal.
        if (n <= 2 && min_sep > 0.5) {
            CHECK(greedy_cost <= optimal + 1e-9);
        } else {
            CHECK(greedy_cost <= 2.0 * optimal + 1e-9);
        }
        CHECK(res.pairs.size() + res.unmatched_gts.size() == gts.size());
    }
}

TEST_CASE("decode config validation", "[decode]") {
    BevConfig bev;
    DecodeConfig bad;
    bad.score_threshold = 0.0;
    CHECK_THROWS_AS(decode(HeatmapSet(bev.k), bad, bev), OutOfRange);
    DecodeConfig bad2;
    bad2.nms_radius = 0;
    CHECK_THROWS_AS(decode(HeatmapSet(bev.k), bad2, bev), OutOfRange);
    DecodeConfig ok;
    HeatmapSet wrong(32);
    CHECK_THROWS_AS(decode(wrong, ok, bev), ShapeMismatch);
}
