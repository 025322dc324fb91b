#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tcs/common.hpp"
#include "tcs/geometry.hpp"
#include "tcs/rng.hpp"

namespace tcs {

struct Segment {
    Vec2 a, b;
};

struct LidarSpec {
    int beams = 1081;        // 270 degrees at 0.25 deg steps
    double fov = 1.5 * kPi;
    double r_max = 10.0;
    double noise_std = 0.01;

    double beam_angle(int i) const {
        return -0.5 * fov + fov * static_cast<double>(i) / (beams - 1);
    }
};

// Waypoint path with a per-waypoint speed profile; cars advance along the
// arc length and stop at the end.
struct CarPath {
    std::vector<Vec2> points;
    std::vector<double> cum_s;
    std::vector<double> speeds;

    void finalize() {
        cum_s.assign(points.size(), 0.0);
        for (std::size_t i = 1; i < points.size(); ++i) {
            cum_s[i] = cum_s[i - 1] + (points[i] - points[i - 1]).norm();
        }
    }

    double length() const { return cum_s.empty() ? 0.0 : cum_s.back(); }

    std::size_t segment_at(double s) const {
        const auto it = std::upper_bound(cum_s.begin(), cum_s.end(), s);
        std::size_t seg = static_cast<std::size_t>(it - cum_s.begin());
        if (seg == 0) return 0;
        if (seg >= points.size()) return points.size() - 2;
        return seg - 1;
    }

    Vec2 position_at(double s) const {
        const double sc = std::clamp(s, 0.0, length());
        const std::size_t seg = segment_at(sc);
        const double seg_len = cum_s[seg + 1] - cum_s[seg];
        const double t = seg_len > 0.0 ? (sc - cum_s[seg]) / seg_len : 0.0;
        return points[seg] + (points[seg + 1] - points[seg]) * t;
    }

    double heading_at(double s) const {
        const std::size_t seg = segment_at(std::clamp(s, 0.0, length()));
        const Vec2 d = points[seg + 1] - points[seg];
        return std::atan2(d.y, d.x);
    }

    double speed_at(double s) const {
        const double sc = std::clamp(s, 0.0, length());
        const std::size_t seg = segment_at(sc);
        const double seg_len = cum_s[seg + 1] - cum_s[seg];
        const double t = seg_len > 0.0 ? (sc - cum_s[seg]) / seg_len : 0.0;
        return speeds[seg] * (1.0 - t) + speeds[seg + 1] * t;
    }
};

struct Car {
    double half_length = 0.25;  // 1:10 scale footprint, 0.5 x 0.3 m
    double half_width = 0.15;
    CarPath path;
    double start_s = 0.0;
};

struct World {
    std::vector<Segment> walls;
    std::vector<Car> cars;  // cars[0] carries the sensor
    LidarSpec lidar;
    double rate = 25.0;  // Hz
    double wall_intensity = 0.3;
    double car_intensity = 0.9;
};

struct Hit {
    int beam = 0;
    double range = 0.0;
    double intensity = 0.0;
};

struct DatasetRecord {
    double t = 0.0;
    EgoState ego;                // global
    std::vector<OppState> opps;  // global
    std::vector<Hit> hits;       // sparse, ego-local beams

    LidarScan scan(const LidarSpec& lidar) const {
        LidarScan s;
        s.timestamp = t;
        s.angles.reserve(hits.size());
        s.ranges.reserve(hits.size());
        s.intensities.reserve(hits.size());
        for (const Hit& h : hits) {
            s.angles.push_back(lidar.beam_angle(h.beam));
            s.ranges.push_back(h.range);
            s.intensities.push_back(h.intensity);
        }
        return s;
    }
};

namespace detail {

// Ray vs segment; returns hit distance or +inf.
inline double ray_segment(const Vec2& origin, const Vec2& dir, const Segment& seg) {
    const Vec2 e = seg.b - seg.a;
    const double denom = dir.cross(e);
    if (std::abs(denom) < 1e-12) return std::numeric_limits<double>::infinity();
    const Vec2 ao = seg.a - origin;
    const double t = ao.cross(e) / denom;
    const double u = ao.cross(dir) / denom;
    if (t <= 1e-9 || u < 0.0 || u > 1.0) return std::numeric_limits<double>::infinity();
    return t;
}

// Ray vs oriented rectangle via the slab method in the body frame.
inline double ray_rectangle(const Vec2& origin, const Vec2& dir, const Vec2& center,
                            double heading, double half_len, double half_wid) {
    const Vec2 o = rotate(origin - center, -heading);
    const Vec2 d = rotate(dir, -heading);
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    const double lo[2] = {-half_len, -half_wid};
    const double hi[2] = {half_len, half_wid};
    const double op[2] = {o.x, o.y};
    const double dp[2] = {d.x, d.y};
    for (int axis = 0; axis < 2; ++axis) {
        if (std::abs(dp[axis]) < 1e-12) {
            if (op[axis] < lo[axis] || op[axis] > hi[axis]) {
                return std::numeric_limits<double>::infinity();
            }
            continue;
        }
        double t1 = (lo[axis] - op[axis]) / dp[axis];
        double t2 = (hi[axis] - op[axis]) / dp[axis];
        if (t1 > t2) std::swap(t1, t2);
        tmin = std::max(tmin, t1);
        tmax = std::min(tmax, t2);
        if (tmin > tmax) return std::numeric_limits<double>::infinity();
    }
    if (tmin > 1e-9) return tmin;
    return std::numeric_limits<double>::infinity();
}

}  // namespace detail

struct CarPose {
    Vec2 position;
    double heading = 0.0;
};

// Casts all beams from the ego pose against walls and the other cars.
// Beams with no hit inside r_max are omitted. Range noise is drawn from the
// supplied generator (pass nullptr for noise-free casts).
inline LidarScan raycast(const World& world, const EgoState& ego,
                         const std::vector<CarPose>& car_poses, std::size_t ego_index,
                         Rng* noise) {
    LidarScan scan;
    for (int b = 0; b < world.lidar.beams; ++b) {
        const double rel = world.lidar.beam_angle(b);
        const double ang = ego.theta + rel;
        const Vec2 origin{ego.x, ego.y};
        const Vec2 dir{std::cos(ang), std::sin(ang)};
        double best = std::numeric_limits<double>::infinity();
        double material = 0.0;
        for (const Segment& w : world.walls) {
            const double t = detail::ray_segment(origin, dir, w);
            if (t < best) {
                best = t;
                material = world.wall_intensity;
            }
        }
        for (std::size_t c = 0; c < car_poses.size(); ++c) {
            if (c == ego_index) continue;
            const double t = detail::ray_rectangle(origin, dir, car_poses[c].position,
                                                   car_poses[c].heading,
                                                   world.cars[c].half_length,
                                                   world.cars[c].half_width);
            if (t < best) {
                best = t;
                material = world.car_intensity;
            }
        }
        if (!(best <= world.lidar.r_max)) continue;
        double range = best;
        if (noise && world.lidar.noise_std > 0.0) {
            range += noise->normal(0.0, world.lidar.noise_std);
            range = std::clamp(range, 1e-6, world.lidar.r_max);
        }
        Hit h;
        h.beam = b;
        h.range = range;
        h.intensity = std::clamp(material / std::max(range, 1e-6), 0.0, 1.0);
        scan.angles.push_back(rel);
        scan.ranges.push_back(range);
        scan.intensities.push_back(h.intensity);
    }
    scan.timestamp = 0.0;
    return scan;
}

// One contiguous sequence. GT velocities are forward finite differences of
// the sampled positions, so labels and kinematics agree exactly at the tick
// rate; headings follow the path tangent.
inline std::vector<DatasetRecord> simulate(const World& world, double duration,
                                           uint64_t seed) {
    if (duration <= 0.0) throw OutOfRange("simulate: duration must be positive");
    const long ticks = std::lround(duration * world.rate);
    if (ticks < 1) throw OutOfRange("simulate: duration too short for one tick");
    const double dt = 1.0 / world.rate;
    Rng rng(seed);

    const std::size_t n_cars = world.cars.size();
    std::vector<double> arc(n_cars);
    for (std::size_t c = 0; c < n_cars; ++c) arc[c] = world.cars[c].start_s;

    // Sample one extra tick so forward differences cover every record.
    std::vector<std::vector<CarPose>> poses(ticks + 1, std::vector<CarPose>(n_cars));
    for (long t = 0; t <= ticks; ++t) {
        for (std::size_t c = 0; c < n_cars; ++c) {
            poses[t][c].position = world.cars[c].path.position_at(arc[c]);
            poses[t][c].heading = world.cars[c].path.heading_at(arc[c]);
        }
        for (std::size_t c = 0; c < n_cars; ++c) {
            arc[c] += world.cars[c].path.speed_at(arc[c]) * dt;
        }
    }

    std::vector<DatasetRecord> records;
    records.reserve(ticks);
    for (long t = 0; t < ticks; ++t) {
        DatasetRecord rec;
        rec.t = static_cast<double>(t) * dt;
        rec.ego = {poses[t][0].position.x, poses[t][0].position.y, poses[t][0].heading};
        for (std::size_t c = 1; c < n_cars; ++c) {
            const Vec2 v = (poses[t + 1][c].position - poses[t][c].position) * world.rate;
            rec.opps.push_back({poses[t][c].position.x, poses[t][c].position.y, v.x, v.y,
                                poses[t][c].heading});
        }
        const LidarScan scan = raycast(world, rec.ego, poses[t], 0, &rng);
        rec.hits.reserve(scan.size());
        for (std::size_t i = 0; i < scan.size(); ++i) {
            // Recover the beam index from the relative angle.
            const int beam = static_cast<int>(std::lround(
                (scan.angles[i] + 0.5 * world.lidar.fov) * (world.lidar.beams - 1) /
                world.lidar.fov));
            rec.hits.push_back({beam, scan.ranges[i], scan.intensities[i]});
        }
        records.push_back(std::move(rec));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Built-in scenarios. Each 10 s chunk of the requested duration becomes an
// independent sequence with its own corridor shape and speed profile, which
// keeps train/validation splits temporally disjoint.

namespace detail {

struct Corridor {
    double amplitude = 0.8;   // centerline sine amplitude, m
    double wavelength = 24.0; // m
    double phase = 0.0;
    double half_width = 1.6;  // wall offset, m
    double x0 = -2.0;
    double x1 = 40.0;

    Vec2 center(double x) const {
        return {x, amplitude * std::sin(2.0 * kPi * x / wavelength + phase)};
    }

    Vec2 normal(double x) const {
        const double slope =
            amplitude * 2.0 * kPi / wavelength * std::cos(2.0 * kPi * x / wavelength + phase);
        const Vec2 tan{1.0, slope};
        const double n = tan.norm();
        return {-tan.y / n, tan.x / n};
    }
};

inline std::vector<Segment> corridor_walls(const Corridor& c) {
    std::vector<Segment> walls;
    const double step = 0.5;
    for (int side = -1; side <= 1; side += 2) {
        Vec2 prev = c.center(c.x0) + c.normal(c.x0) * (side * c.half_width);
        for (double x = c.x0 + step; x <= c.x1 + 1e-9; x += step) {
            const Vec2 cur = c.center(x) + c.normal(x) * (side * c.half_width);
            walls.push_back({prev, cur});
            prev = cur;
        }
    }
    return walls;
}

// Path along the corridor with a lateral offset plus weave, and a speed
// profile that is a bounded oscillation around the base speed.
inline CarPath corridor_path(const Corridor& c, double base_speed, double speed_amp,
                             double speed_wavelength, double speed_phase, double lateral,
                             double weave_amp, double weave_wavelength, double weave_phase) {
    CarPath path;
    const double step = 0.1;
    double s_acc = 0.0;
    Vec2 prev;
    bool first = true;
    for (double x = c.x0; x <= c.x1 + 1e-9; x += step) {
        const double offset =
            lateral + weave_amp * std::sin(2.0 * kPi * x / weave_wavelength + weave_phase);
        const Vec2 p = c.center(x) + c.normal(x) * offset;
        if (!first) s_acc += (p - prev).norm();
        path.points.push_back(p);
        path.speeds.push_back(base_speed +
                              speed_amp * std::sin(2.0 * kPi * s_acc / speed_wavelength +
                                                   speed_phase));
        prev = p;
        first = false;
    }
    path.finalize();
    return path;
}

struct ScenarioParams {
    double base_lo = 1.1, base_hi = 1.9;
    double amp_lo = 0.25, amp_hi = 0.45;
    bool two_opponents = false;
    bool parked = false;
};

inline ScenarioParams scenario_params(const std::string& name) {
    ScenarioParams p;
    if (name == "follow") {
        // defaults above
    } else if (name == "follow_fast") {
        p.base_lo = 2.3;
        p.base_hi = 2.8;
        p.amp_lo = 0.2;
        p.amp_hi = 0.3;
    } else if (name == "duel") {
        p.base_lo = 1.1;
        p.base_hi = 1.7;
        p.amp_lo = 0.15;
        p.amp_hi = 0.3;
        p.two_opponents = true;
    } else if (name == "static") {
        p.parked = true;
    } else {
        throw OutOfRange("unknown scenario: " + name);
    }
    return p;
}

inline World build_world(const ScenarioParams& p, Rng& rng, double seq_duration) {
    Corridor c;
    if (p.parked) {
        c.amplitude = 0.0;
        c.x1 = 12.0;
    } else {
        c.amplitude = rng.uniform(0.4, 1.2);
        c.wavelength = rng.uniform(18.0, 30.0);
        c.phase = rng.uniform(0.0, 2.0 * kPi);
        c.x1 = p.base_hi * seq_duration + 12.0;
    }

    World world;
    world.walls = corridor_walls(c);

    const double base = p.parked ? 0.0 : rng.uniform(p.base_lo, p.base_hi);
    const double ego_start = 2.0;

    Car ego;
    ego.path = corridor_path(c, base, 0.0, 10.0, 0.0, 0.0, 0.0, 10.0, 0.0);
    ego.start_s = ego_start;
    world.cars.push_back(ego);

    const int n_opps = p.two_opponents ? 2 : 1;
    for (int i = 0; i < n_opps; ++i) {
        const double amp = p.parked ? 0.0 : rng.uniform(p.amp_lo, p.amp_hi);
        const double speed_wl = rng.uniform(7.0, 11.0);
        const double speed_ph = rng.uniform(0.0, 2.0 * kPi);
        double weave_amp = p.parked ? 0.0 : rng.uniform(0.0, 0.3);
        double weave_wl = rng.uniform(6.0, 12.0);
        double weave_ph = rng.uniform(0.0, 2.0 * kPi);
        double gap = rng.uniform(2.2, 3.0);
        double lateral = 0.0;
        if (p.two_opponents) {
            gap = (i == 0) ? rng.uniform(1.8, 2.2) : rng.uniform(3.3, 3.7);
            lateral = (i == 0) ? -0.45 : 0.45;
            weave_amp = rng.uniform(0.0, 0.1);
        }
        if (p.parked) {
            gap = 2.5;
            lateral = 0.2;
        }
        Car opp;
        opp.path = corridor_path(c, base, amp, speed_wl, speed_ph, lateral, weave_amp,
                                 weave_wl, weave_ph);
        opp.start_s = ego_start + gap;
        world.cars.push_back(opp);
    }
    return world;
}

}  // namespace detail

inline const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names = {"follow", "follow_fast", "duel", "static"};
    return names;
}

// Generates the named scenario as a list of ~10 s sequences totalling
// exactly round(duration * rate) records.
inline std::vector<std::vector<DatasetRecord>> simulate_scenario(const std::string& name,
                                                                 double duration,
                                                                 uint64_t seed,
                                                                 LidarSpec* lidar_out = nullptr,
                                                                 double* rate_out = nullptr) {
    const detail::ScenarioParams params = detail::scenario_params(name);
    if (duration <= 0.0) throw OutOfRange("simulate_scenario: duration must be positive");

    const double rate = 25.0;
    const long total_ticks = std::lround(duration * rate);
    if (total_ticks < 1) throw OutOfRange("simulate_scenario: duration too short");
    const long seq_ticks = 250;  // 10 s

    Rng master(seed);
    std::vector<std::vector<DatasetRecord>> sequences;
    long done = 0;
    std::size_t index = 0;
    while (done < total_ticks) {
        const long ticks = std::min(seq_ticks, total_ticks - done);
        Rng world_rng = master.fork(index);
        const World world = detail::build_world(params, world_rng, ticks / rate);
        auto records = simulate(world, ticks / rate, world_rng.next_u64());
        if (lidar_out && index == 0) *lidar_out = world.lidar;
        if (rate_out && index == 0) *rate_out = world.rate;
        sequences.push_back(std::move(records));
        done += ticks;
        ++index;
    }
    return sequences;
}

}  // namespace tcs
