#include "tactile/hardness.hpp"
#include "tactile/pipeline.hpp"
#include "tactile/serialize.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace tactile;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int threads = 1;
};

PipelineConfig load(const Common& c) {
    PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    cfg.validate();
    return cfg;
}

fs::path out_dir(const Common& c, const PipelineConfig& cfg, const char* fallback) {
    if (!c.out.empty()) return c.out;
    if (!cfg.paths.out_dir.empty()) return cfg.paths.out_dir;
    return fallback;
}

std::string pick(const std::string& flag, const std::string& from_config, const char* what) {
    if (!flag.empty()) return flag;
    if (!from_config.empty()) return from_config;
    throw ConfigError(std::string("missing ") + what);
}

std::string frame_name(int k, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04d%s", k, ext);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) { write_text_atomic(path, text); }

// Runs body(i) for i in [0, n) on up to `threads` workers.
template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

int cmd_pattern(const Common& c) {
    const PipelineConfig cfg = load(c);
    const fs::path out = out_dir(c, cfg, "pattern");
    const DotPattern p = generate_dome_pattern(cfg.intrinsics, cfg.distortion, cfg.dome, cfg.pattern_grid_step);
    if (p.dots2d.empty())
        std::cerr << "warning: grid step " << cfg.pattern_grid_step << " px leaves no node inside the image\n";
    fs::create_directories(out);
    write_pattern_csv(out / "pattern.csv", p);
    write_pattern_svg(out / "pattern.svg", p, cfg.intrinsics, cfg.pattern_dot_radius);
    std::cout << p.dots2d.size() << " dots, " << p.neighbor_arcs.size() << " arcs -> " << out.string() << "\n";
    return 0;
}

int cmd_simulate(const Common& c, const std::string& scenario_flag) {
    const PipelineConfig cfg = load(c);
    const ContactScenario sc = load_scenario(pick(scenario_flag, cfg.paths.scenario, "--scenario"));
    const fs::path out = out_dir(c, cfg, "sim");
    const SensorRenderer renderer(sensor_model_from_config(cfg));
    fs::create_directories(out / "frames");
    fs::create_directories(out / "truth");
    nlohmann::json frames = nlohmann::json::array();
    for (int k = 0; k < sc.frames(); ++k) {
        FrameTruth t;
        const Frame f = renderer.render(sc, k, &t);
        write_ppm(out / "frames" / frame_name(k, ".ppm"), f);
        write_json(out / "truth" / frame_name(k, ".json"), truth_to_json(t));
        write_truth_csv(out / "truth" / frame_name(k, ".csv"), t);
        frames.push_back({{"frame", "frames/" + frame_name(k, ".ppm")},
                          {"truth", "truth/" + frame_name(k, ".json")},
                          {"markers", "truth/" + frame_name(k, ".csv")}});
    }
    write_json(out / "manifest.json", {{"version", 1},
                                       {"frames", sc.frames()},
                                       {"seed", cfg.seed},
                                       {"width", cfg.intrinsics.width},
                                       {"height", cfg.intrinsics.height},
                                       {"scenario", scenario_to_json(sc)},
                                       {"files", frames}});
    std::cout << sc.frames() << " frames -> " << out.string() << "\n";
    return 0;
}

void write_marker_csv(const fs::path& path, const FrameResult& r) {
    std::ostringstream os;
    os.precision(9);
    os << "id,x_px,y_px,dx_ref_px,dy_ref_px\n";
    for (std::size_t i = 0; i < r.black_ids.size(); ++i)
        os << r.black_ids[i] << ',' << r.black_px[i].x() << ',' << r.black_px[i].y() << ','
           << r.black_from_reference[i].x() << ',' << r.black_from_reference[i].y() << '\n';
    write_text(path, os.str());
}

int cmd_process(const Common& c, const std::string& frames_flag, const std::optional<bool>& overlay_flag) {
    PipelineConfig cfg = load(c);
    if (overlay_flag) cfg.overlay = *overlay_flag;
    const auto paths = list_frames(pick(frames_flag, cfg.paths.frames_dir, "--frames"));
    if (paths.size() < 2) throw DataError("process needs at least two frames");
    const fs::path out = out_dir(c, cfg, "processed");

    std::vector<Frame> frames;
    frames.reserve(paths.size());
    for (const auto& p : paths) frames.push_back(read_ppm(p));

    // Markers, flow and pose run in order; shape recovery is per frame and
    // runs on the worker pool.
    SequenceProcessor proc(cfg);
    std::vector<FrameResult> results;
    double core_ms = 0.0;
    for (const auto& f : frames) {
        results.push_back(proc.process(f, false));
        core_ms += results.back().core_ms;
    }
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.shape_enabled)
        parallel_for(frames.size(), c.threads, [&](std::size_t i) {
            FrameResult& r = results[i];
            try {
                r.shape = recover_shape(preprocess_color(frames[i], proc.undistort(), cfg), cfg);
            } catch (const ConvergenceError& e) {
                r.flags.push_back(std::string("shape: ") + e.what());
            }
        });
    const double shape_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(out / "results");
    if (cfg.shape_enabled) fs::create_directories(out / "height");
    if (cfg.overlay) fs::create_directories(out / "overlay");
    std::ostringstream summary;
    summary.precision(9);
    summary << "frame,flags,fx,fy,fz,tx,ty,tz,saturated,black_tracked,black_mean_displacement_px,contact_area_px,"
               "peak_height_mm\n";
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const FrameResult& r = results[i];
        const int k = static_cast<int>(i);
        write_json(out / "results" / frame_name(k, ".json"), frame_result_to_json(r));
        write_marker_csv(out / "results" / frame_name(k, "_markers.csv"), r);
        write_flow_csv(out / "results" / frame_name(k, "_flow.csv"), r.flow);
        if (r.shape) write_heightmap_pgm16(out / "height" / frame_name(k, ".pgm"), r.shape->height);
        if (cfg.overlay)
            write_ppm(out / "overlay" / frame_name(k, ".ppm"),
                      render_overlay(undistort_frame(frames[i], proc.undistort()), r, proc));
        flagged += !r.flags.empty();
        const Wrench w = r.wrench.value_or(Wrench{});
        summary << k << ',' << r.flags.size() << ',' << w.force.x() << ',' << w.force.y() << ',' << w.force.z()
                << ',' << w.torque.x() << ',' << w.torque.y() << ',' << w.torque.z() << ',' << int(w.saturated)
                << ',' << r.black_ids.size() << ',' << r.mean_black_displacement_px << ','
                << (r.shape ? r.shape->contact_area_px : 0) << ',' << (r.shape ? r.shape->peak_height_mm : 0.0)
                << '\n';
        for (const auto& flag : r.flags) std::cerr << "frame " << k << ": " << flag << "\n";
    }
    write_text(out / "summary.csv", summary.str());
    std::cout << results.size() << " frames, " << flagged << " flagged; core "
              << core_ms / static_cast<double>(results.size()) << " ms/frame";
    if (cfg.shape_enabled) std::cout << ", shape " << shape_ms / static_cast<double>(results.size()) << " ms/frame";
    std::cout << " -> " << out.string() << "\n";
    return 0;
}

int cmd_calibrate(const Common& c, const std::string& samples_flag) {
    const PipelineConfig cfg = load(c);
    const auto samples = samples_from_json(read_json(pick(samples_flag, cfg.paths.samples, "--samples")));
    const fs::path out = out_dir(c, cfg, "calibration");
    const CalibrationReport rep = calibrate_stiffness(samples);
    fs::create_directories(out);
    write_json(out / "stiffness.json", stiffness_to_json(rep.stiffness));
    write_json(out / "calibration.json", calibration_report_to_json(rep));
    std::cout << rep.samples << " samples, condition number " << rep.condition_number << "\nrms residual";
    const char* axes[] = {"Fx", "Fy", "Fz", "Tx", "Ty", "Tz"};
    for (int i = 0; i < 6; ++i) std::cout << ' ' << axes[i] << '=' << rep.rms_residual[i];
    std::cout << "\n-> " << out.string() << "\n";
    return 0;
}

struct HardnessOptions {
    std::string manifest;
    int generate = 0;
    int frames = 20;
    int scale = 1;
};

int cmd_hardness(const Common& c, const HardnessOptions& o) {
    const PipelineConfig base = load(c);
    const PipelineConfig cfg = downscaled_config(base, o.scale);
    const fs::path out = out_dir(c, base, "hardness");

    std::vector<ManifestEntry> entries;
    if (o.generate > 0) {
        DatasetConfig dc;
        dc.sequences = o.generate;
        dc.frames = o.frames;
        dc.seed = base.seed;
        const auto scenarios = make_dataset(dc);
        fs::create_directories(out / "dataset");
        for (std::size_t i = 0; i < scenarios.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "seq_%04zu.json", i);
            write_json(out / "dataset" / name, scenario_to_json(scenarios[i]));
            entries.push_back({fs::path(name), scenarios[i].hardness});
        }
        write_json(out / "dataset" / "manifest.json", manifest_to_json(entries));
        entries = load_manifest(out / "dataset" / "manifest.json");
    } else {
        entries = load_manifest(pick(o.manifest, base.paths.manifest, "--manifest"));
    }
    std::vector<int> labels;
    for (const auto& e : entries) labels.push_back(static_cast<int>(e.label));
    const bool soft = std::count(labels.begin(), labels.end(), 0) > 0;
    const bool hard = std::count(labels.begin(), labels.end(), 1) > 0;
    if (!soft || !hard) throw DataError("manifest needs both soft and hard sequences");

    const SensorRenderer renderer(sensor_model_from_config(cfg));
    std::vector<SequenceFeatures> feats(entries.size());
    parallel_for(entries.size(), c.threads, [&](std::size_t i) {
        const fs::path& p = entries[i].path;
        if (fs::is_directory(p)) {
            std::vector<Frame> frames;
            for (const auto& f : list_frames(p)) frames.push_back(read_ppm(f));
            feats[i] = process_features(frames, cfg);
        } else {
            feats[i] = simulate_features(renderer, cfg, load_scenario(p));
        }
    });

    const auto [train_idx, test_idx] = split_indices(labels, cfg.train_fraction, cfg.seed);
    auto gather = [&](const std::vector<std::size_t>& idx, std::vector<SequenceFeatures>& f, std::vector<int>& l) {
        for (std::size_t i : idx) {
            f.push_back(feats[i]);
            l.push_back(labels[i]);
        }
    };
    std::vector<SequenceFeatures> train_f, test_f;
    std::vector<int> train_l, test_l;
    gather(train_idx, train_f, train_l);
    gather(test_idx, test_f, test_l);

    TrainConfig tc;
    tc.learning_rate = cfg.learning_rate;
    tc.epochs = cfg.epochs;
    tc.seed = cfg.seed;
    tc.pooling = cfg.last5_pooling ? Pooling::Last5 : Pooling::Mean;
    const HardnessModel model = train(train_f, train_l, tc);
    const Metrics train_m = evaluate(model, train_f, train_l);
    const Metrics test_m = evaluate(model, test_f, test_l);

    fs::create_directories(out);
    nlohmann::json fj = nlohmann::json::array();
    for (std::size_t i = 0; i < entries.size(); ++i)
        fj.push_back({{"path", entries[i].path.generic_string()},
                      {"label", to_string(entries[i].label)},
                      {"rows", features_to_json(feats[i])}});
    write_json(out / "features.json", fj);
    write_json(out / "model.json", model_to_json(model));
    write_json(out / "metrics.json", {{"train", metrics_to_json(train_m)},
                                      {"test", metrics_to_json(test_m)},
                                      {"train_sequences", train_idx.size()},
                                      {"test_sequences", test_idx.size()},
                                      {"loss_history", model.loss_history}});
    std::cout << "train " << train_idx.size() << " / test " << test_idx.size() << " sequences; test accuracy "
              << test_m.accuracy << ", precision " << test_m.precision << ", final loss " << model.final_loss
              << " -> " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dome tactile sensor toolkit: pattern export, simulation, processing, calibration, hardness"};
    app.require_subcommand(1);
    Common common;
    std::string overlay, frames_dir, scenario, samples;
    HardnessOptions hopt;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "Pipeline config JSON");
        sub->add_option("--seed", common.seed, "Random seed (overrides the config)");
        sub->add_option("--out", common.out, "Output directory");
        sub->add_option("--threads", common.threads, "Worker threads")->check(CLI::Range(1, 256));
    };
    auto* pattern = app.add_subcommand("pattern", "Write the dome dot pattern as CSV and SVG");
    add_common(pattern);
    auto* simulate = app.add_subcommand("simulate", "Render a contact scenario with ground truth");
    add_common(simulate);
    simulate->add_option("--scenario", scenario, "Scenario JSON");
    auto* process = app.add_subcommand("process", "Run the perception pipeline over a frame directory");
    add_common(process);
    process->add_option("--frames", frames_dir, "Directory of .ppm frames; the first is the reference");
    process->add_option("--overlay", overlay, "Write overlay images (on/off)")->check(CLI::IsMember({"on", "off"}));
    auto* calibrate = app.add_subcommand("calibrate", "Fit a stiffness matrix to pose/wrench samples");
    add_common(calibrate);
    calibrate->add_option("--samples", samples, "Samples JSON");
    auto* hardness = app.add_subcommand("hardness", "Train and evaluate the soft/hard classifier");
    add_common(hardness);
    hardness->add_option("--manifest", hopt.manifest, "Dataset manifest JSON");
    hardness->add_option("--generate", hopt.generate, "Simulate this many sequences instead of reading a manifest")
        ->check(CLI::Range(2, 100000));
    hardness->add_option("--frames", hopt.frames, "Frames per generated sequence")->check(CLI::Range(10, 10000));
    hardness->add_option("--scale", hopt.scale, "Render and process at 1/scale resolution")
        ->check(CLI::Range(1, 8));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (pattern->parsed()) return cmd_pattern(common);
        if (simulate->parsed()) return cmd_simulate(common, scenario);
        if (process->parsed()) {
            std::optional<bool> ov;
            if (!overlay.empty()) ov = overlay == "on";
            return cmd_process(common, frames_dir, ov);
        }
        if (calibrate->parsed()) return cmd_calibrate(common, samples);
        if (hardness->parsed()) return cmd_hardness(common, hopt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ConvergenceError& e) {
        std::cerr << "did not converge: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
