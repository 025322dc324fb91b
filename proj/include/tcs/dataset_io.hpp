#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcs/sim.hpp"

namespace tcs {

struct Dataset {
    LidarSpec lidar;
    double rate = 25.0;
    std::vector<std::vector<DatasetRecord>> sequences;

    std::size_t record_count() const {
        std::size_t n = 0;
        for (const auto& s : sequences) n += s.size();
        return n;
    }
};

// Line-delimited JSON: a header object, then one record object per line.
// Sequence boundaries are implicit; a timestamp that does not increase
// starts a new sequence.
inline void write_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("write_dataset: cannot open " + path);
    nlohmann::json header = {{"version", 1},
                             {"beams", ds.lidar.beams},
                             {"fov", ds.lidar.fov},
                             {"r_max", ds.lidar.r_max},
                             {"rate", ds.rate}};
    os << header.dump() << '\n';
    for (const auto& seq : ds.sequences) {
        for (const auto& rec : seq) {
            nlohmann::json j;
            j["t"] = rec.t;
            j["ego"] = {rec.ego.x, rec.ego.y, rec.ego.theta};
            nlohmann::json opps = nlohmann::json::array();
            for (const auto& o : rec.opps) {
                opps.push_back({o.x, o.y, o.v_x, o.v_y, o.theta});
            }
            j["opps"] = std::move(opps);
            nlohmann::json hits = nlohmann::json::array();
            for (const auto& h : rec.hits) {
                hits.push_back({h.beam, h.range, h.intensity});
            }
            j["hits"] = std::move(hits);
            os << j.dump() << '\n';
        }
    }
    if (!os) throw IoError("write_dataset: write failed for " + path);
}

inline Dataset read_dataset(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("read_dataset: cannot open " + path);
    std::string line;
    std::size_t line_no = 0;

    auto fail = [&](const std::string& what) {
        throw SchemaError("read_dataset: " + what + " at line " + std::to_string(line_no) +
                          " of " + path);
    };

    Dataset ds;
    if (!std::getline(is, line)) {
        ++line_no;
        fail("missing header");
    }
    ++line_no;
    nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
    if (header.is_discarded() || !header.is_object()) fail("malformed header");
    if (!header.contains("version") || header["version"] != 1) fail("unsupported version");
    try {
        ds.lidar.beams = header.at("beams").get<int>();
        ds.lidar.fov = header.at("fov").get<double>();
        ds.lidar.r_max = header.at("r_max").get<double>();
        ds.rate = header.at("rate").get<double>();
    } catch (const nlohmann::json::exception&) {
        fail("header missing sensor fields");
    }

    double prev_t = -1.0;
    bool first = true;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) fail("malformed record");
        DatasetRecord rec;
        try {
            rec.t = j.at("t").get<double>();
            const auto& ego = j.at("ego");
            if (ego.size() != 3) fail("ego must have 3 entries");
            rec.ego = {ego[0].get<double>(), ego[1].get<double>(), ego[2].get<double>()};
            for (const auto& o : j.at("opps")) {
                if (o.size() != 5) fail("opp state must have 5 entries");
                rec.opps.push_back({o[0].get<double>(), o[1].get<double>(),
                                    o[2].get<double>(), o[3].get<double>(),
                                    o[4].get<double>()});
            }
            for (const auto& h : j.at("hits")) {
                if (h.size() != 3) fail("hit must have 3 entries");
                const int beam = h[0].get<int>();
                if (beam < 0 || beam >= ds.lidar.beams) fail("beam index out of range");
                rec.hits.push_back({beam, h[1].get<double>(), h[2].get<double>()});
            }
        } catch (const nlohmann::json::exception&) {
            fail("record missing fields");
        }
        if (first || rec.t <= prev_t) ds.sequences.emplace_back();
        prev_t = rec.t;
        first = false;
        ds.sequences.back().push_back(std::move(rec));
    }
    return ds;
}

}  // namespace tcs
