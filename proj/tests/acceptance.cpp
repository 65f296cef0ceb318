// Acceptance gate: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.
#include "tactile/hardness.hpp"
#include "tactile/pipeline.hpp"
#include "tactile/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <sys/wait.h>

using namespace tactile;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double max_of(const std::vector<double>& v) { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); }

// Random wrench with |F| in [f_lo, f_hi], pressing (Fz < 0), and moderate torques.
Wrench random_wrench(std::mt19937_64& rng, double f_lo, double f_hi) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> mag(f_lo, f_hi);
    Vec3 dir(0.3 * u(rng), 0.3 * u(rng), -1.0);
    dir.normalize();
    Wrench w;
    w.force = mag(rng) * dir;
    w.torque = Vec3(20 * u(rng), 20 * u(rng), 15 * u(rng));
    return w;
}

// One reference frame followed by independently drawn loads.
ContactScenario random_load_sequence(int frames, std::mt19937_64& rng, double f_lo, double f_hi) {
    ContactScenario sc;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    sc.indenter.polar_deg = 8 * u(rng);
    sc.indenter.azimuth_deg = 360 * u(rng);
    sc.wrenches.push_back(Wrench{});
    sc.depths.push_back(0.0);
    for (int k = 1; k < frames; ++k) {
        const Wrench w = random_wrench(rng, f_lo, f_hi);
        sc.wrenches.push_back(w);
        sc.depths.push_back(0.1 * w.force.norm());
    }
    return sc;
}

// Six-axis relative error with torques scaled by the platform marker radius,
// so both blocks carry force units.
double wrench_relative_error(const Wrench& est, const Wrench& truth, double length_mm) {
    Vec6 e, t;
    e << est.force - truth.force, (est.torque - truth.torque) / length_mm;
    t << truth.force, truth.torque / length_mm;
    return e.norm() / t.norm();
}

// 1. End-to-end pose loop.
Outcome criterion_pose() {
    const auto t0 = Clock::now();
    struct Run {
        std::vector<double> et, er;
        int missing = 0;
    };
    auto run = [](double noise, double jitter, std::uint64_t seed) {
        PipelineConfig cfg;
        cfg.shape_enabled = false;
        cfg.noise_sigma = noise;
        cfg.centroid_jitter_px = jitter;
        cfg.seed = seed;
        const SensorRenderer renderer(sensor_model_from_config(cfg));
        std::mt19937_64 rng(seed);
        Run r;
        for (int s = 0; s < 10; ++s) {
            const ContactScenario sc = random_load_sequence(20, rng, 0.0, 10.0);
            SequenceProcessor proc(cfg);
            for (int k = 0; k < sc.frames(); ++k) {
                FrameTruth t;
                const FrameResult res = proc.process(renderer.render(sc, k, &t), false);
                if (!res.pose) {
                    ++r.missing;
                    continue;
                }
                r.et.push_back((res.pose->t - t.pose.t).norm());
                r.er.push_back(rad2deg(rotation_distance(*res.pose, t.pose)));
            }
        }
        return r;
    };
    const Run clean = run(0.0, 0.0, 11);
    const Run noisy = run(0.5, 0.1, 12);
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = clean.missing == 0 && noisy.missing == 0 && clean.et.size() == 200 && max_of(clean.et) <= 0.05 &&
             max_of(clean.er) <= 0.1 && median(noisy.et) <= 0.1 && median(noisy.er) <= 0.2 && secs <= 60.0;
    o.detail = fmt("noiseless max %.4f mm / %.4f deg over %zu frames; noisy median %.4f mm / %.4f deg; "
                   "%d frames without pose; %.1f s",
                   max_of(clean.et), max_of(clean.er), clean.et.size(), median(noisy.et), median(noisy.er),
                   clean.missing + noisy.missing, secs);
    return o;
}

// 2. Calibration and wrench accuracy.
Outcome criterion_wrench() {
    PipelineConfig cfg;
    cfg.shape_enabled = false;
    const SensorModel model = sensor_model_from_config(cfg);
    const SensorRenderer renderer(model);
    std::mt19937_64 rng(21);

    // Calibrate from 36 ground-truth (delta, wrench) pairs of the simulator.
    std::vector<CalibrationSample> samples;
    for (int i = 0; i < 36; ++i) {
        const Wrench w = random_wrench(rng, 0.5, 10.0);
        samples.push_back({compliance_delta(model.stiffness, w), w});
    }
    const CalibrationReport rep = calibrate_stiffness(samples);
    const double calib_err = (rep.stiffness.k - model.stiffness.k).norm() / model.stiffness.k.norm();

    // Held-out frames processed with the calibrated matrix.
    cfg.stiffness_source = StiffnessSource::Matrix;
    cfg.stiffness_matrix = rep.stiffness;
    const double length = model.platform.s1[0].head<2>().norm();
    std::vector<double> errs;
    for (int s = 0; s < 5; ++s) {
        const ContactScenario sc = random_load_sequence(11, rng, 2.0, 10.0);
        SequenceProcessor proc(cfg);
        for (int k = 0; k < sc.frames(); ++k) {
            FrameTruth t;
            const FrameResult res = proc.process(renderer.render(sc, k, &t), false);
            if (k == 0) continue;
            errs.push_back(res.wrench ? wrench_relative_error(*res.wrench, t.wrench, length) : 1.0);
        }
    }

    // Saturation flag around the 17 N bound.
    auto saturated = [&](double fz) {
        ContactScenario sc = make_scenario(2, (Vec6() << 0, 0, -fz, 0, 0, 0).finished(), 0.0, Profile::Ramp);
        SequenceProcessor proc(cfg);
        proc.process(renderer.render(sc, 0), false);
        const FrameResult r = proc.process(renderer.render(sc, 1), false);
        return r.wrench && r.wrench->saturated;
    };
    const bool flag_high = saturated(18.0), flag_low = saturated(16.0);

    Outcome o;
    o.pass = calib_err <= 1e-9 && max_of(errs) <= 0.02 && flag_high && !flag_low;
    o.detail = fmt("calibration rel err %.2e (cond %.1f); held-out wrench rel err max %.4f median %.4f over %zu "
                   "frames, |F| in [2, 10] N; 18 N flagged %s, 16 N flagged %s",
                   calib_err, rep.condition_number, max_of(errs), median(errs), errs.size(), flag_high ? "yes" : "no",
                   flag_low ? "yes" : "no");
    return o;
}

// 3. Flow accuracy on simulated presses.
Outcome criterion_flow() {
    PipelineConfig cfg;
    cfg.shape_enabled = false;
    const SensorModel model = sensor_model_from_config(cfg);
    const SensorRenderer renderer(model);
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double err_sum = 0, max_step = 0;
    std::size_t err_n = 0, tracked = 0, expected = 0;
    for (int s = 0; s < 6; ++s) {
        Indenter ind;
        ind.polar_deg = 10 * u(rng);
        ind.azimuth_deg = 360 * u(rng);
        ind.radius_mm = 3 + 4 * u(rng);
        const double fz = 5 + 5 * u(rng);
        const ContactScenario sc = make_scenario(s < 3 ? 12 : 5, (Vec6() << 0.2 * fz, -0.1 * fz, -fz, 15, -10, 5).finished(),
                                                 0.15 * fz, s % 2 ? Profile::Triangle : Profile::Ramp, ind,
                                                 s % 3 ? HardnessClass::Hard : HardnessClass::Soft,
                                                 s % 3 ? 0.005 : 0.05);
        SequenceProcessor proc(cfg);
        std::vector<int> match;
        Points2 prev_truth;
        for (int k = 0; k < sc.frames(); ++k) {
            FrameTruth t;
            const FrameResult res = proc.process(renderer.render(sc, k, &t), false);
            if (k == 0) {
                for (const auto& c : proc.reference_black()) {
                    int best = -1;
                    double bd = 1e9;
                    for (std::size_t j = 0; j < t.black_px.size(); ++j) {
                        const double d = (t.black_px[j] - c).norm();
                        if (d < bd) {
                            bd = d;
                            best = static_cast<int>(j);
                        }
                    }
                    match.push_back(best);
                }
            } else {
                expected += match.size();
                tracked += res.black_ids.size();
                for (std::size_t i = 0; i < res.black_ids.size(); ++i) {
                    const auto j = static_cast<std::size_t>(match[static_cast<std::size_t>(res.black_ids[i])]);
                    err_sum += (res.black_px[i] - t.black_px[j]).norm();
                    ++err_n;
                }
                for (std::size_t j = 0; j < t.black_px.size(); ++j)
                    max_step = std::max(max_step, (t.black_px[j] - prev_truth[j]).norm());
            }
            prev_truth = t.black_px;
        }
    }
    const double epe = err_n ? err_sum / static_cast<double>(err_n) : 1e9;
    const double frac = expected ? static_cast<double>(tracked) / static_cast<double>(expected) : 0.0;
    Outcome o;
    o.pass = max_step <= 5.0 && epe <= 0.3 && frac >= 0.98;
    o.detail = fmt("mean endpoint error %.4f px, tracked %.2f%% (%zu/%zu), largest truth motion %.2f px/frame", epe,
                   100 * frac, tracked, expected, max_step);
    return o;
}

// 4. Shape recovery of a sphere cap.
Outcome criterion_shape() {
    PipelineConfig cfg;
    const SensorModel model = sensor_model_from_config(cfg);
    const SensorRenderer renderer(model);
    Indenter ind;
    ind.radius_mm = 5.0;
    ind.azimuth_deg = 30;
    const ContactScenario sc = make_scenario(2, Vec6::Zero(), 1.0, Profile::Ramp, ind);
    const Frame frame = renderer.render(sc, 1);
    const FrameF color = preprocess_color(frame, undistort_map(cfg.intrinsics, cfg.distortion), cfg);
    const ShapeResult shape = recover_shape(color, cfg);
    const HeightMap truth = renderer.height_map(sc, 1);
    const Indentation id = make_indentation(model, sc, 1);

    // Height relative to the undeformed level, which is the median over the
    // valid domain (most of the gel is untouched).
    std::vector<double> level;
    for (int y = 0; y < shape.height.height_px(); ++y)
        for (int x = 0; x < shape.height.width(); ++x)
            if (shape.height.valid.at(x, y)) level.push_back(shape.height.at(x, y));
    const double base = median(level);
    double se = 0;
    std::size_t n = 0;
    for (int y = 0; y < truth.height_px(); ++y)
        for (int x = 0; x < truth.width(); ++x)
            if (truth.at(x, y) > 0.0) {
                const double e = shape.height.at(x, y) - base - truth.at(x, y);
                se += e * e;
                ++n;
            }
    const double rms = std::sqrt(se / static_cast<double>(n));

    const NormalMap nm = normals_from_rgb(color, cfg.lights, cfg.normals);
    std::size_t valid = 0, good = 0;
    for (int y = 0; y < nm.height(); ++y)
        for (int x = 0; x < nm.width(); ++x) {
            if (!nm.valid(x, y)) continue;
            const Vec3 e = id.evaluate(x, y);
            const Vec3 normal = Vec3(-e(1), -e(2), 1).normalized();
            ++valid;
            good += rad2deg(std::acos(std::min(1.0, normal.dot(nm.normal(x, y))))) < 2.0;
        }
    const double frac = static_cast<double>(good) / static_cast<double>(valid);
    Outcome o;
    o.pass = rms <= 0.05 * id.depth && frac >= 0.95;
    o.detail = fmt("height RMS %.4f mm = %.2f%% of %.3f mm cap depth over %zu px; %.2f%% of %zu valid normals "
                   "within 2 deg",
                   rms, 100 * rms / id.depth, id.depth, n, 100 * frac, valid);
    return o;
}

// 5. Pattern uniformity.
double marching_arc(const Vec3& a, const Vec3& b, const DomeGeometry& dome, int steps) {
    const Vec3 u = a - dome.center, v = b - dome.center;
    double len = 0;
    Vec3 prev = a;
    for (int s = 1; s <= steps; ++s) {
        const Vec3 p = dome.center + dome.radius * (u + (static_cast<double>(s) / steps) * (v - u)).normalized();
        len += (p - prev).norm();
        prev = p;
    }
    return len;
}

Outcome criterion_pattern() {
    const PipelineConfig cfg;
    const DotPattern p = generate_dome_pattern(cfg.intrinsics, cfg.distortion, cfg.dome, cfg.pattern_grid_step);
    double reproj = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const Vec2 node(cfg.intrinsics.cx + p.grid[i].x() * p.grid_step, cfg.intrinsics.cy + p.grid[i].y() * p.grid_step);
        reproj = std::max(reproj, (project(p.dots3d[i], cfg.intrinsics, cfg.distortion) - node).norm());
    }
    double arc = 0;
    for (const auto& a : p.neighbor_arcs)
        arc = std::max(arc, std::abs(a.length_mm - marching_arc(p.dots3d[static_cast<std::size_t>(a.from)],
                                                                p.dots3d[static_cast<std::size_t>(a.to)], cfg.dome,
                                                                20000)));
    Outcome o;
    o.pass = p.size() > 0 && reproj <= 1e-9 && arc <= 1e-6;
    o.detail = fmt("%zu dots, max reprojection %.2e px; %zu arcs, max |arc - marching oracle| %.2e mm", p.size(),
                   reproj, p.neighbor_arcs.size(), arc);
    return o;
}

// 6. Throughput of the per-frame pipeline without shape integration.
Outcome criterion_throughput() {
    PipelineConfig cfg;
    const SensorRenderer renderer(sensor_model_from_config(cfg));
    std::mt19937_64 rng(61);
    const ContactScenario sc = random_load_sequence(60, rng, 0.0, 10.0);
    std::vector<Frame> frames;
    for (int k = 0; k < sc.frames(); ++k) frames.push_back(renderer.render(sc, k));

    SequenceProcessor proc(cfg);
    proc.process(frames[0], false);  // reference frame, not timed
    const auto t0 = Clock::now();
    for (std::size_t k = 1; k < frames.size(); ++k) proc.process(frames[k], false);
    const double per_frame = seconds_since(t0) / static_cast<double>(frames.size() - 1);

    const auto map = undistort_map(cfg.intrinsics, cfg.distortion);
    const auto t1 = Clock::now();
    for (int k = 0; k < 5; ++k) recover_shape(preprocess_color(frames[static_cast<std::size_t>(10 * k + 5)], map, cfg), cfg);
    const double shape_ms = 1000 * seconds_since(t1) / 5;

    Outcome o;
    o.pass = 1.0 / per_frame >= 30.0;
    o.detail = fmt("%.1f ms/frame = %.1f frames/s (480x480, single thread); shape recovery %.1f ms/frame (no bound)",
                   1000 * per_frame, 1.0 / per_frame, shape_ms);
    return o;
}

// 7. Hardness experiment on simulated sequences.
Outcome criterion_hardness() {
    const auto t0 = Clock::now();
    const PipelineConfig cfg = downscaled_config(PipelineConfig{}, 2);
    const SensorRenderer renderer(sensor_model_from_config(cfg));
    DatasetConfig dc;
    dc.seed = 71;
    const auto scenarios = make_dataset(dc);
    std::vector<SequenceFeatures> feats;
    std::vector<int> labels;
    for (const auto& sc : scenarios) {
        feats.push_back(simulate_features(renderer, cfg, sc));
        labels.push_back(static_cast<int>(sc.hardness));
    }
    const auto [tr, te] = split_indices(labels, 0.8, dc.seed);
    std::vector<SequenceFeatures> xtr, xte;
    std::vector<int> ytr, yte;
    for (auto i : tr) {
        xtr.push_back(feats[i]);
        ytr.push_back(labels[i]);
    }
    for (auto i : te) {
        xte.push_back(feats[i]);
        yte.push_back(labels[i]);
    }
    TrainConfig tc;
    tc.seed = dc.seed;
    const HardnessModel a = train(xtr, ytr, tc);
    const HardnessModel b = train(xtr, ytr, tc);
    const bool deterministic = a.weights == b.weights && a.bias == b.bias && a.loss_history == b.loss_history;
    const Metrics test = evaluate(a, xte, yte);

    // Gradient check on the training features at random parameters.
    Eigen::MatrixX3d x(static_cast<Eigen::Index>(xtr.size()), 3);
    Eigen::VectorXd y(x.rows());
    for (std::size_t i = 0; i < xtr.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = a.standardize(pool(xtr[i], a.pooling)).transpose();
        y[static_cast<Eigen::Index>(i)] = ytr[i];
    }
    std::mt19937_64 rng(72);
    std::normal_distribution<double> g(0.0, 1.0);
    double worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 w(g(rng), g(rng), g(rng));
        const double bias = g(rng);
        const auto [gw, gb] = bce_gradient(w, bias, x, y);
        Eigen::Vector4d an, nu;
        an << gw, gb;
        const double h = 1e-6;
        for (int k = 0; k < 4; ++k) {
            Vec3 wp = w, wm = w;
            double bp = bias, bm = bias;
            if (k < 3) {
                wp[k] += h;
                wm[k] -= h;
            } else {
                bp += h;
                bm -= h;
            }
            nu[k] = (bce_loss(wp, bp, x, y) - bce_loss(wm, bm, x, y)) / (2 * h);
        }
        worst = std::max(worst, (an - nu).norm() / an.norm());
    }

    Outcome o;
    o.pass = test.accuracy >= 0.95 && deterministic && worst <= 1e-6;
    o.detail = fmt("held-out accuracy %.2f%% (precision %.2f%%, recall %.2f%%, %zu test / %zu train sequences, "
                   "half resolution); deterministic %s; gradient rel err %.1e; %.0f s",
                   100 * test.accuracy, 100 * test.precision, 100 * test.recall, te.size(), tr.size(),
                   deterministic ? "yes" : "no", worst, seconds_since(t0));
    return o;
}

// 8. Unit property suites, each within 120 s.
Outcome criterion_suites() {
    const std::vector<std::string> suites{"camera", "imageproc", "flow", "pose", "wrench", "shape", "sim", "hardness", "cli"};
    Outcome o;
    o.pass = true;
    std::string times;
    for (const auto& s : suites) {
        const std::string exe = std::string(TACTILE_TEST_DIR) + "/test_" + s;
        const auto t0 = Clock::now();
        const int status = std::system((exe + " >/dev/null 2>&1").c_str());
        const double secs = seconds_since(t0);
        const bool ok = WIFEXITED(status) && WEXITSTATUS(status) == 0 && secs <= 120.0;
        o.pass = o.pass && ok;
        times += fmt("%s%s %.1fs%s", times.empty() ? "" : ", ", s.c_str(), secs, ok ? "" : " FAILED");
    }
    o.detail = times;
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"pose loop", criterion_pose},          {"wrench calibration", criterion_wrench},
        {"flow accuracy", criterion_flow},      {"shape recovery", criterion_shape},
        {"pattern uniformity", criterion_pattern}, {"throughput", criterion_throughput},
        {"hardness", criterion_hardness},       {"property suites", criterion_suites},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failed += !o.pass;
        std::printf("%s C%d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
