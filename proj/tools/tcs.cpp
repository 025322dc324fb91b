// Command-line front end: dataset simulation, training, evaluation,
// inference, latency benchmarking, and figure emission.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tcs/config.hpp"
#include "tcs/dataset_io.hpp"
#include "tcs/eval.hpp"
#include "tcs/plot.hpp"
#include "tcs/quant.hpp"
#include "tcs/sim.hpp"
#include "tcs/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitData = 5;

uint64_t seed_or_env(const CLI::Option* opt, uint64_t seed) {
    if (opt->count() > 0) return seed;
    if (const char* env = std::getenv("TCS_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw tcs::OutOfRange("TCS_SEED is not a valid integer");
        }
    }
    return seed;
}

std::vector<tcs::BevInput> dataset_inputs(const tcs::Dataset& ds, const tcs::BevConfig& bev,
                                          std::size_t limit) {
    std::vector<tcs::BevInput> inputs;
    for (const auto& seq : ds.sequences) {
        if (seq.size() < 2) continue;
        tcs::BevFrame prev = tcs::rasterize(seq[0].scan(ds.lidar), bev);
        for (std::size_t t = 1; t < seq.size() && inputs.size() < limit; ++t) {
            tcs::BevFrame curr = tcs::rasterize(seq[t].scan(ds.lidar), bev);
            inputs.push_back(tcs::stack(prev, curr));
            prev = std::move(curr);
        }
        if (inputs.size() >= limit) break;
    }
    return inputs;
}

std::vector<tcs::ReferenceLine> references_for(const tcs::Dataset& ds,
                                               const std::string& ref_arg) {
    std::vector<tcs::ReferenceLine> refs;
    if (ref_arg == "auto") {
        for (const auto& seq : ds.sequences) refs.push_back(tcs::reference_from_ego(seq));
        return refs;
    }
    std::ifstream is(ref_arg);
    if (!is) throw tcs::IoError("cannot open reference line file " + ref_arg);
    std::vector<tcs::Vec2> pts;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        for (auto& c : line) {
            if (c == ',') c = ' ';
        }
        std::istringstream ls(line);
        double x, y;
        if (!(ls >> x >> y)) throw tcs::SchemaError("reference line: expected 'x y' pairs");
        pts.push_back({x, y});
    }
    if (pts.size() < 2) throw tcs::SchemaError("reference line: need at least 2 points");
    const tcs::ReferenceLine ref(pts);
    refs.assign(ds.sequences.size(), ref);
    return refs;
}

int run_simulate(const std::string& scenario, double duration, uint64_t seed,
                 const std::string& out) {
    tcs::Dataset ds;
    ds.sequences = tcs::simulate_scenario(scenario, duration, seed, &ds.lidar, &ds.rate);
    tcs::write_dataset(ds, out);
    std::cout << "wrote " << ds.record_count() << " records in " << ds.sequences.size()
              << " sequences to " << out << "\n";
    return kExitOk;
}

int run_train(const std::string& data_path, const std::string& config_path,
              const std::string& out, int epochs_override, uint64_t seed,
              bool seed_given, const std::string& quant_out) {
    tcs::RunConfig cfg;
    if (!config_path.empty()) cfg = tcs::load_run_config(config_path);
    if (epochs_override > 0) cfg.train.epochs = epochs_override;
    if (epochs_override == 0) throw tcs::OutOfRange("--epochs must be >= 1");
    if (seed_given) cfg.train.seed = seed;
    cfg.train.validate();
    cfg.bev.validate();
    cfg.model.k = cfg.bev.k;

    std::cout << tcs::config_echo(cfg);
    const tcs::Dataset ds = tcs::read_dataset(data_path);
    const tcs::TrainResult result = tcs::train(ds, cfg.bev, cfg.model, cfg.loss, cfg.train);
    result.model.save(out);
    const std::string metrics_path = out + ".metrics.csv";
    tcs::write_text_file(metrics_path, tcs::metrics_csv(result.log));
    std::cout << "saved checkpoint to " << out << " (best epoch " << result.best_epoch
              << "), metrics to " << metrics_path << "\n";

    if (!quant_out.empty()) {
        tcs::TcsModel model = result.model;
        const auto inputs = dataset_inputs(ds, cfg.bev, 64);
        const tcs::ActivationRanges ranges = tcs::calibrate(model, inputs);
        tcs::save_quant_model(tcs::quantize_model(model, ranges), quant_out);
        std::cout << "saved quantized checkpoint to " << quant_out << "\n";
    }
    return kExitOk;
}

int run_eval(const std::string& data_path, const std::string& ckpt, bool with_quant,
             const std::string& quant_ckpt, bool with_track, bool with_abd,
             const std::string& ref_arg, const std::string& out) {
    const tcs::Dataset ds = tcs::read_dataset(data_path);
    bool any_gt = false;
    for (const auto& seq : ds.sequences) {
        for (const auto& rec : seq) any_gt = any_gt || !rec.opps.empty();
    }
    if (!any_gt) throw tcs::EmptyDataset("eval: dataset has no ground-truth opponents");

    tcs::HarnessConfig cfg;
    tcs::TcsModel model;
    tcs::TcsModel* model_ptr = nullptr;
    if (!ckpt.empty()) {
        model = tcs::TcsModel::load(ckpt);
        cfg.bev.k = model.cfg.k;
        model_ptr = &model;
    }

    tcs::QuantModel qmodel;
    const tcs::QuantModel* qmodel_ptr = nullptr;
    if (with_quant) {
        if (!quant_ckpt.empty()) {
            qmodel = tcs::load_quant_model(quant_ckpt);
        } else {
            if (!model_ptr) throw tcs::OutOfRange("--quant requires --ckpt or --quant-ckpt");
            const auto inputs = dataset_inputs(ds, cfg.bev, 64);
            qmodel = tcs::quantize_model(model, tcs::calibrate(model, inputs));
        }
        qmodel_ptr = &qmodel;
    }

    const auto refs = references_for(ds, ref_arg);
    const auto rows = tcs::run_comparison(ds, model_ptr, qmodel_ptr, with_abd, with_track,
                                          cfg, refs);
    tcs::write_text_file(out, tcs::report_csv(rows));
    tcs::write_text_file(out + ".details.csv", tcs::report_details_csv(rows));
    std::cout << tcs::report_table(rows);
    std::cout << "wrote " << out << " and " << out << ".details.csv\n";
    return kExitOk;
}

int run_infer(const std::string& data_path, const std::string& ckpt, bool quant) {
    const tcs::Dataset ds = tcs::read_dataset(data_path);
    tcs::TcsModel model = tcs::TcsModel::load(ckpt);
    tcs::BevConfig bev;
    bev.k = model.cfg.k;
    tcs::DecodeConfig dec;

    tcs::QuantModel qmodel;
    if (quant) {
        const auto inputs = dataset_inputs(ds, bev, 64);
        qmodel = tcs::quantize_model(model, tcs::calibrate(model, inputs));
    }

    const std::size_t plane = static_cast<std::size_t>(bev.k) * bev.k;
    for (const auto& seq : ds.sequences) {
        tcs::BevFrame prev;
        bool has_prev = false;
        for (const auto& rec : seq) {
            tcs::BevFrame curr = tcs::rasterize(rec.scan(ds.lidar), bev);
            const tcs::BevInput input = tcs::stack(has_prev ? prev : curr, curr);
            prev = std::move(curr);
            has_prev = true;

            tcs::HeatmapSet maps(bev.k);
            if (quant) {
                maps = tcs::quantized_forward(qmodel, input);
            } else {
                tcs::Tensor x({1, 6, static_cast<std::size_t>(bev.k),
                               static_cast<std::size_t>(bev.k)});
                std::copy(input.channels.begin(), input.channels.end(), x.data.begin());
                const tcs::Tensor out = model.forward(x, false);
                std::copy_n(out.data.begin(), plane, maps.pos.begin());
                std::copy_n(out.data.begin() + plane, plane, maps.v_x.begin());
                std::copy_n(out.data.begin() + 2 * plane, plane, maps.v_y.begin());
                std::copy_n(out.data.begin() + 3 * plane, plane, maps.yaw.begin());
            }
            const auto dets = tcs::decode(maps, dec, bev);
            nlohmann::json j;
            j["t"] = rec.t;
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& d : dets) {
                arr.push_back({{"x", d.x},
                               {"y", d.y},
                               {"v_x", d.v_x},
                               {"v_y", d.v_y},
                               {"theta", d.theta},
                               {"score", d.score}});
            }
            j["detections"] = std::move(arr);
            std::cout << j.dump() << "\n";
        }
    }
    return kExitOk;
}

int run_bench(const std::string& ckpt, int frames, uint64_t seed) {
    if (frames < 1) throw tcs::OutOfRange("--frames must be >= 1");
    tcs::TcsModel model = tcs::TcsModel::load(ckpt);
    tcs::BevConfig bev;
    bev.k = model.cfg.k;
    tcs::Rng rng(seed);

    auto random_input = [&]() {
        tcs::BevInput in;
        in.k = bev.k;
        in.channels.resize(6 * static_cast<std::size_t>(bev.k) * bev.k);
        for (auto& v : in.channels) v = rng.bernoulli(0.08) ? rng.uniform(0.0, 1.0) : 0.0;
        return in;
    };
    std::vector<tcs::BevInput> cal;
    for (int i = 0; i < 16; ++i) cal.push_back(random_input());
    const tcs::QuantModel qmodel = tcs::quantize_model(model, tcs::calibrate(model, cal));

    using clock = std::chrono::steady_clock;
    auto bench_path = [&](auto&& fn) {
        std::vector<double> ms;
        for (int f = 0; f < frames; ++f) {
            const tcs::BevInput in = random_input();
            const auto t0 = clock::now();
            fn(in);
            ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
        }
        double mean = 0.0;
        for (double m : ms) mean += m;
        mean /= ms.size();
        double var = 0.0;
        for (double m : ms) var += (m - mean) * (m - mean);
        return std::make_pair(mean, std::sqrt(var / ms.size()));
    };

    const auto [fm, fs] = bench_path([&](const tcs::BevInput& in) {
        tcs::Tensor x({1, 6, static_cast<std::size_t>(bev.k), static_cast<std::size_t>(bev.k)});
        std::copy(in.channels.begin(), in.channels.end(), x.data.begin());
        model.forward(x, false);
    });
    const auto [qm, qs] = bench_path(
        [&](const tcs::BevInput& in) { tcs::quantized_forward(qmodel, in); });

    std::cout << "float: mean " << fm << " ms, std " << fs << " ms over " << frames
              << " frames\n";
    std::cout << "quantized: mean " << qm << " ms, std " << qs << " ms over " << frames
              << " frames\n";
    return kExitOk;
}

int run_plot(const std::string& report, const std::string& out_dir, const std::string& ckpt,
             const std::string& data_path, int frame) {
    std::filesystem::create_directories(out_dir);
    const auto cols = tcs::csv_numeric_columns(report);
    std::vector<tcs::CurveSeries> series;
    for (const auto& c : cols) {
        bool any = false;
        for (double v : c.values) any = any || std::isfinite(v);
        if (any) series.push_back(c);
    }
    bool plotted = false;
    if (!series.empty() && !series.front().values.empty()) {
        tcs::write_svg_curves(out_dir + "/curves.svg", std::filesystem::path(report).filename(),
                              series);
        plotted = true;
    }

    if (!ckpt.empty() && !data_path.empty()) {
        tcs::TcsModel model = tcs::TcsModel::load(ckpt);
        tcs::BevConfig bev;
        bev.k = model.cfg.k;
        const tcs::Dataset ds = tcs::read_dataset(data_path);
        const auto inputs = dataset_inputs(ds, bev, static_cast<std::size_t>(frame) + 1);
        if (inputs.empty() || frame < 0 || static_cast<std::size_t>(frame) >= inputs.size()) {
            throw tcs::EmptyDataset("plot: frame index outside the dataset");
        }
        const tcs::BevInput& input = inputs[frame];
        tcs::Tensor x({1, 6, static_cast<std::size_t>(bev.k), static_cast<std::size_t>(bev.k)});
        std::copy(input.channels.begin(), input.channels.end(), x.data.begin());
        const tcs::Tensor out = model.forward(x, false);
        const std::size_t plane = static_cast<std::size_t>(bev.k) * bev.k;
        const char* names[4] = {"heatmap_pos.pgm", "heatmap_vx.pgm", "heatmap_vy.pgm",
                                "heatmap_yaw.pgm"};
        for (int c = 0; c < 4; ++c) {
            std::vector<double> chan(out.data.begin() + c * plane,
                                     out.data.begin() + (c + 1) * plane);
            tcs::write_pgm(out_dir + "/" + names[c], chan, bev.k);
        }
        std::vector<double> occ(input.channels.begin() + 3 * plane,
                                input.channels.begin() + 4 * plane);
        tcs::write_pgm(out_dir + "/input_occupancy.pgm", occ, bev.k);
        plotted = true;
    }
    if (!plotted) throw tcs::EmptyDataset("plot: nothing to plot in " + report);
    std::cout << "wrote figures to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BEV LiDAR perception pipeline: simulate, train, evaluate"};
    app.require_subcommand(1);

    std::string scenario = "follow", out_path, data_path, config_path, ckpt_path;
    std::string quant_ckpt, ref_arg = "auto", report_path, out_dir = "plots";
    double duration = 60.0;
    uint64_t seed = 0;
    int epochs_override = -1, frames = 100, frame_index = 0;
    bool with_quant = false, with_track = false, with_abd = false;

    auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    sim->add_option("--scenario", scenario, "follow | follow_fast | duel | static");
    sim->add_option("--duration", duration, "seconds of data")->required();
    auto* sim_seed = sim->add_option("--seed", seed, "random seed");
    sim->add_option("--out", out_path, "output dataset path")->required();

    auto* train_cmd = app.add_subcommand("train", "train the detector");
    train_cmd->add_option("--data", data_path, "dataset path")->required();
    train_cmd->add_option("--config", config_path, "key = value config file");
    train_cmd->add_option("--out", out_path, "checkpoint output path")->required();
    train_cmd->add_option("--epochs", epochs_override, "override epoch count");
    auto* train_seed = train_cmd->add_option("--seed", seed, "random seed");
    train_cmd->add_option("--quant-out", quant_ckpt, "also write a quantized checkpoint");

    auto* eval_cmd = app.add_subcommand("eval", "run the comparison harness");
    eval_cmd->add_option("--data", data_path, "dataset path")->required();
    eval_cmd->add_option("--ckpt", ckpt_path, "float checkpoint");
    eval_cmd->add_flag("--quant", with_quant, "add quantized rows");
    eval_cmd->add_option("--quant-ckpt", quant_ckpt, "quantized checkpoint to load");
    eval_cmd->add_flag("--track", with_track, "add tracked rows");
    eval_cmd->add_flag("--abd", with_abd, "add classical baseline rows");
    eval_cmd->add_option("--ref", ref_arg, "'auto' or a reference polyline file");
    eval_cmd->add_option("--out", report_path, "report CSV path")->required();

    auto* infer_cmd = app.add_subcommand("infer", "per-frame detections as JSON lines");
    infer_cmd->add_option("--scan-stream", data_path, "dataset path")->required();
    infer_cmd->add_option("--ckpt", ckpt_path, "checkpoint")->required();
    infer_cmd->add_flag("--quant", with_quant, "use the quantized path");

    auto* bench_cmd = app.add_subcommand("bench", "latency of float and quantized paths");
    bench_cmd->add_option("--ckpt", ckpt_path, "checkpoint")->required();
    bench_cmd->add_option("--frames", frames, "frame count");
    auto* bench_seed = bench_cmd->add_option("--seed", seed, "random seed");

    auto* plot_cmd = app.add_subcommand("plot", "emit SVG curves and PGM heatmaps");
    plot_cmd->add_option("--report", report_path, "metrics or report CSV")->required();
    plot_cmd->add_option("--out", out_dir, "output directory")->required();
    plot_cmd->add_option("--ckpt", ckpt_path, "checkpoint for heatmap images");
    plot_cmd->add_option("--data", data_path, "dataset for heatmap images");
    plot_cmd->add_option("--frame", frame_index, "frame index for heatmap images");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError&) {
        std::cerr << "usage error; see --help\n";
        return kExitUsage;
    }

    try {
        if (sim->parsed()) {
            return run_simulate(scenario, duration, seed_or_env(sim_seed, seed), out_path);
        }
        if (train_cmd->parsed()) {
            const bool seed_given =
                train_seed->count() > 0 || std::getenv("TCS_SEED") != nullptr;
            return run_train(data_path, config_path, out_path, epochs_override,
                             seed_or_env(train_seed, seed), seed_given, quant_ckpt);
        }
        if (eval_cmd->parsed()) {
            return run_eval(data_path, ckpt_path, with_quant || !quant_ckpt.empty(),
                            quant_ckpt, with_track, with_abd, ref_arg, report_path);
        }
        if (infer_cmd->parsed()) {
            return run_infer(data_path, ckpt_path, with_quant);
        }
        if (bench_cmd->parsed()) {
            return run_bench(ckpt_path, frames, seed_or_env(bench_seed, seed));
        }
        if (plot_cmd->parsed()) {
            return run_plot(report_path, out_dir, ckpt_path, data_path, frame_index);
        }
    } catch (const tcs::NonFiniteLoss& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const tcs::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const tcs::SchemaError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const tcs::EmptyDataset& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const tcs::EmptyCalibrationSet& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const tcs::OutOfRange& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const tcs::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
