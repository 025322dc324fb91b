#include <catch2/catch_amalgamated.hpp>

#include "tcs/bev.hpp"
#include "tcs/decode.hpp"
#include "tcs/rng.hpp"

using namespace tcs;

namespace {

LidarScan scan_from_points(const std::vector<Vec2>& pts, double intensity = 0.5) {
    LidarScan s;
    for (const Vec2& p : pts) {
        s.angles.push_back(std::atan2(p.y, p.x));
        s.ranges.push_back(p.norm());
        s.intensities.push_back(intensity);
    }
    return s;
}

bool near(double a, double b, double tol = 1e-12) { return std::abs(a - b) <= tol; }

}  // namespace

TEST_CASE("rasterize grid rule", "[bev]") {
    BevConfig cfg;  // k=64, p=0.1
    const BevFrame f = rasterize(scan_from_points({{1.0, 0.0}}), cfg);
    CHECK(f.occupancy[f.idx(10, 32)] == 1.0);
    int occupied = 0;
    for (double v : f.occupancy) occupied += v > 0.0;
    CHECK(occupied == 1);
}

TEST_CASE("rasterize empty region gives zero frame", "[bev]") {
    BevConfig cfg;
    // Single return behind the sensor: outside the forward-facing grid.
    const BevFrame f = rasterize(scan_from_points({{-1.0, 0.0}}), cfg);
    for (double v : f.occupancy) CHECK(v == 0.0);
    for (double v : f.intensity) CHECK(v == 0.0);
    for (double v : f.density) CHECK(v == 0.0);
}

TEST_CASE("rasterize density normalization", "[bev]") {
    BevConfig cfg;
    // Three points in the cell at (1.0, 0), one point in the cell at (2.0, 0).
    const BevFrame f = rasterize(
        scan_from_points({{1.01, 0.01}, {1.03, 0.03}, {1.05, 0.05}, {2.05, 0.05}}), cfg);
    CHECK(near(f.density[f.idx(10, 32)], 1.0));
    CHECK(near(f.density[f.idx(20, 32)], 1.0 / 3.0));
}

TEST_CASE("rasterize intensity normalized by frame max", "[bev]") {
    BevConfig cfg;
    LidarScan s;
    s.angles = {0.0, 0.1};
    s.ranges = {1.0, 2.0};
    s.intensities = {0.2, 0.8};
    const BevFrame f = rasterize(s, cfg);
    double mx = 0.0;
    for (double v : f.intensity) mx = std::max(mx, v);
    CHECK(near(mx, 1.0));
}

TEST_CASE("rasterize invariants on random scans", "[bev]") {
    BevConfig cfg;
    Rng rng(42);
    for (int rep = 0; rep < 20; ++rep) {
        LidarScan s;
        const int n = 1 + static_cast<int>(rng.uniform_int(300));
        for (int i = 0; i < n; ++i) {
            s.angles.push_back(rng.uniform(-kPi, kPi));
            s.ranges.push_back(rng.uniform(0.01, 9.0));
            s.intensities.push_back(rng.uniform(0.0, 1.0));
        }
        std::sort(s.angles.begin(), s.angles.end());
        const BevFrame f = rasterize(s, cfg);
        for (std::size_t c = 0; c < f.occupancy.size(); ++c) {
            CHECK((f.occupancy[c] == 0.0 || f.occupancy[c] == 1.0));
            CHECK(f.intensity[c] >= 0.0);
            CHECK(f.intensity[c] <= 1.0);
            CHECK(f.density[c] >= 0.0);
            CHECK(f.density[c] <= 1.0);
            CHECK((f.density[c] > 0.0) == (f.occupancy[c] == 1.0));
        }
    }
}

TEST_CASE("stack ordering and identity", "[bev]") {
    BevConfig cfg;
    const BevFrame a = rasterize(scan_from_points({{1.0, 0.0}}), cfg);
    const BevFrame b = rasterize(scan_from_points({{2.0, 0.5}}), cfg);
    const BevInput both = stack(a, b);
    const std::size_t plane = static_cast<std::size_t>(cfg.k) * cfg.k;

    const BevInput same = stack(a, a);
    for (std::size_t i = 0; i < 3 * plane; ++i) {
        CHECK(same.channels[i] == same.channels[i + 3 * plane]);
    }

    BevFrame zero(cfg.k);
    const BevInput zf = stack(zero, a);
    for (std::size_t i = 0; i < 3 * plane; ++i) CHECK(zf.channels[i] == 0.0);

    // channel 3 of stack(A, B) equals channel 0 of B
    for (std::size_t i = 0; i < plane; ++i) {
        CHECK(both.channels[3 * plane + i] == b.occupancy[i]);
    }

    BevFrame mismatched(32);
    CHECK_THROWS_AS(stack(a, mismatched), ShapeMismatch);
}

TEST_CASE("make_targets peak values", "[bev]") {
    BevConfig cfg;  // sigma 2
    // Cell (10, 32) center: x = 1.05, y = 0.05.
    const std::vector<OppState> opps = {{1.05, 0.05, 1.5, -0.4, 0.3}};
    const HeatmapSet maps = make_targets(opps, cfg);
    CHECK(near(maps.pos[maps.idx(10, 32)], 1.0));
    CHECK(near(maps.v_x[maps.idx(10, 32)], 1.5));
    CHECK(near(maps.v_y[maps.idx(10, 32)], -0.4));
    CHECK(near(maps.yaw[maps.idx(10, 32)], 0.3));
    // Two pixels away along i: exp(-4 / (2*sigma^2)) = exp(-0.5).
    CHECK(near(maps.pos[maps.idx(12, 32)], std::exp(-0.5), 1e-12));
    CHECK(near(maps.v_x[maps.idx(12, 32)], 1.5 * std::exp(-0.5), 1e-12));
}

TEST_CASE("make_targets argmax at keypoint cell, monotone decay", "[bev]") {
    BevConfig cfg;
    Rng rng(9);
    for (int rep = 0; rep < 20; ++rep) {
        const OppState opp{rng.uniform(0.5, 6.0), rng.uniform(-2.8, 2.8), 1.0, 0.0, 0.0};
        const HeatmapSet maps = make_targets({opp}, cfg);
        const int ki = cfg.cell_i(opp.x);
        const int kj = cfg.cell_j(opp.y);
        std::size_t argmax = 0;
        for (std::size_t c = 1; c < maps.pos.size(); ++c) {
            if (maps.pos[c] > maps.pos[argmax]) argmax = c;
        }
        CHECK(argmax == maps.idx(ki, kj));

        // Values decay with pixel distance from the continuous keypoint.
        const double pi = cfg.px_i(opp.x), pj = cfg.px_j(opp.y);
        double prev_value = 2.0;
        for (int radius = 1; radius < 8; ++radius) {
            const int i = ki + radius;
            if (i >= cfg.k) break;
            const double v = maps.pos[maps.idx(i, kj)];
            CHECK(v < prev_value);
            prev_value = v;
            (void)pi;
            (void)pj;
        }
    }
}

TEST_CASE("make_targets skips out-of-FOV opponents", "[bev]") {
    BevConfig cfg;
    int skipped = 0;
    const HeatmapSet maps = make_targets({{-1.0, 0.0, 0, 0, 0}, {1.05, 0.05, 0, 0, 0}},
                                         cfg, &skipped);
    CHECK(skipped == 1);
    CHECK(near(maps.pos[maps.idx(10, 32)], 1.0));
}

TEST_CASE("flip_x mirrors states and channels", "[bev]") {
    BevConfig cfg;
    const std::vector<OppState> opps = {{1.0, 0.5, 1.0, 0.2, 0.1}};
    const HeatmapSet targets = make_targets(opps, cfg);
    const BevInput input = stack(rasterize(scan_from_points({{1.0, 0.5}}), cfg),
                                 rasterize(scan_from_points({{1.0, 0.5}}), cfg));
    const FlipResult flipped = flip_x(input, targets, opps);
    CHECK(near(flipped.opps[0].x, 1.0));
    CHECK(near(flipped.opps[0].y, -0.5));
    CHECK(near(flipped.opps[0].v_x, 1.0));
    CHECK(near(flipped.opps[0].v_y, -0.2));
    CHECK(near(flipped.opps[0].theta, -0.1));

    // Involution.
    const FlipResult twice = flip_x(flipped.input, flipped.targets, flipped.opps);
    CHECK(twice.input.channels == input.channels);
    CHECK(twice.targets.pos == targets.pos);
    CHECK(twice.targets.v_x == targets.v_x);
    CHECK(twice.targets.v_y == targets.v_y);
    CHECK(twice.targets.yaw == targets.yaw);
    CHECK(near(twice.opps[0].y, opps[0].y));
    CHECK(near(twice.opps[0].theta, opps[0].theta));
}

TEST_CASE("flip_x moves peak to mirrored column", "[bev]") {
    BevConfig cfg;  // k=64
    // Put the keypoint at cell (10, 40): x in [1.0,1.1), y center of column 40.
    const double x = cfg.x_of(10.5), y = cfg.y_of(40.5);
    const HeatmapSet maps = make_targets({{x, y, 0, 0, 0}}, cfg);
    BevInput dummy;
    dummy.k = cfg.k;
    dummy.channels.assign(6 * static_cast<std::size_t>(cfg.k) * cfg.k, 0.0);
    const FlipResult flipped = flip_x(dummy, maps, {{x, y, 0, 0, 0}});
    std::size_t argmax = 0;
    for (std::size_t c = 1; c < flipped.targets.pos.size(); ++c) {
        if (flipped.targets.pos[c] > flipped.targets.pos[argmax]) argmax = c;
    }
    CHECK(argmax == maps.idx(10, 23));
}

TEST_CASE("rotate_scan", "[bev]") {
    std::vector<OppState> opps = {{1.0, 0.0, 0.5, 0.0, 0.0}};
    LidarScan scan = scan_from_points({{1.0, 0.0}});

    // phi = 0 is the identity.
    LidarScan s0 = scan;
    auto o0 = opps;
    rotate_scan(s0, o0, 0.0);
    CHECK(near(s0.point(0).x, 1.0));
    CHECK(near(o0[0].x, 1.0));

    LidarScan s1 = scan;
    auto o1 = opps;
    rotate_scan(s1, o1, kPi / 4.0);
    CHECK(near(s1.point(0).x, std::sqrt(2.0) / 2.0, 1e-12));
    CHECK(near(s1.point(0).y, std::sqrt(2.0) / 2.0, 1e-12));
    CHECK(near(o1[0].x, std::sqrt(2.0) / 2.0, 1e-12));
    CHECK(near(o1[0].theta, kPi / 4.0, 1e-12));

    rotate_scan(s1, o1, -kPi / 4.0);
    CHECK(near(s1.point(0).x, 1.0, 1e-9));
    CHECK(near(s1.point(0).y, 0.0, 1e-9));
    CHECK(near(o1[0].x, 1.0, 1e-9));
}

TEST_CASE("frame_skip doubles velocities only", "[bev]") {
    BevConfig cfg;
    std::vector<LidarScan> seq;
    for (int t = 0; t < 3; ++t) {
        seq.push_back(scan_from_points({{1.0 + 0.02 * t, 0.0}}));
    }
    const std::vector<OppState> opps = {{1.04, 0.0, 0.5, 0.1, 0.2}};
    const FramePair fp = frame_skip(seq, opps, 2, cfg);
    CHECK(near(fp.opps[0].v_x, 1.0));
    CHECK(near(fp.opps[0].v_y, 0.2));
    CHECK(near(fp.opps[0].x, 1.04));
    CHECK(near(fp.opps[0].theta, 0.2));

    const FramePair zero = frame_skip(seq, {{1.0, 0.0, 0.0, 0.0, 0.0}}, 2, cfg);
    CHECK(zero.opps[0].v_x == 0.0);
    CHECK(zero.opps[0].v_y == 0.0);

    CHECK_THROWS_AS(frame_skip(seq, opps, 1, cfg), IndexOutOfRange);
}

TEST_CASE("augmented targets decode back to augmented states", "[bev]") {
    BevConfig cfg;
    DecodeConfig dec;
    Rng rng(13);
    for (int rep = 0; rep < 30; ++rep) {
        OppState opp{rng.uniform(1.0, 5.5), rng.uniform(-2.5, 2.5), rng.uniform(-2, 2),
                     rng.uniform(-2, 2), rng.uniform(-1.5, 1.5)};
        std::vector<OppState> opps = {opp};
        LidarScan scan = scan_from_points({{opp.x, opp.y}});

        const double phi = rng.uniform(-kPi / 4, kPi / 4);
        rotate_scan(scan, opps, phi);
        if (!cfg.in_fov(opps[0].x, opps[0].y)) continue;

        HeatmapSet targets = make_targets(opps, cfg);
        BevInput input = stack(rasterize(scan, cfg), rasterize(scan, cfg));
        if (rng.bernoulli(0.5)) {
            FlipResult f = flip_x(input, targets, opps);
            input = std::move(f.input);
            targets = std::move(f.targets);
            opps = std::move(f.opps);
        }
        const auto dets = decode(targets, dec, cfg);
        REQUIRE(dets.size() == 1);
        CHECK(std::abs(dets[0].x - opps[0].x) <= 0.5 * cfg.p);
        CHECK(std::abs(dets[0].y - opps[0].y) <= 0.5 * cfg.p);
        CHECK(near(dets[0].v_x, opps[0].v_x, 1e-9));
        CHECK(near(dets[0].v_y, opps[0].v_y, 1e-9));
        CHECK(near(dets[0].theta, opps[0].theta, 1e-9));
    }
}
