// flattenet command line. One binary, one subcommand per job:
//
//   describe   parameter/MAC report for a config, alone or behind a backbone
//   gradcheck  finite-difference checks of the backward passes (f64 only)
//   selftest   round-trip, equivalence and density checks over the presets
//   train      toy training run on a synthetic task, with history/checkpoint
//   eval       re-evaluate a saved checkpoint on the fixed evaluation batch
//   dump/load  write and inspect FLT1 tensor files
//
// Exit codes: 0 success, 1 a check or run failed, 2 bad invocation or config.

#include <CLI11.hpp>
#include <json.hpp>

#include "flattenet/complexity.hpp"
#include "flattenet/config.hpp"
#include "flattenet/gradcheck.hpp"
#include "flattenet/io.hpp"
#include "flattenet/pipeline.hpp"
#include "flattenet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace fn = flattenet;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kBadInvocation = 2;

// A config argument is either a JSON file path or the bare name of a shipped
// preset ("table1" or "table1.json" both work).
fn::ModelConfig resolve_config(const std::string& arg) {
    if (std::filesystem::exists(arg)) return fn::load_config(arg);
    const std::string stem = std::filesystem::path(arg).stem().string();
    if (const fn::ModelConfig* preset = fn::find_builtin(stem)) return *preset;
    throw fn::ConfigError("config \"" + arg + "\": no such file or preset");
}

fn::Dims parse_hw(const std::string& text, std::int64_t c) {
    const auto sep = text.find_first_of("xX");
    std::size_t eh = 0, ew = 0;
    std::int64_t h = 0, w = 0;
    try {
        h = std::stoll(text.substr(0, sep), &eh);
        w = std::stoll(text.substr(sep + 1), &ew);
    } catch (const std::exception&) {
        throw fn::ConfigError("--input: expected HxW, got \"" + text + "\"");
    }
    if (sep == std::string::npos || eh != sep || ew != text.size() - sep - 1 || h < 1 || w < 1)
        throw fn::ConfigError("--input: expected HxW, got \"" + text + "\"");
    return fn::Dims{1, c, h, w};
}

// ---------------------------------------------------------------- describe

struct DescribeArgs {
    std::string config;
    std::string backbone = "none";
    std::string input; // HxW; feature dims without a backbone, image dims with one
    std::int64_t channels = 2048;
    std::string format = "text";
};

int cmd_describe(const DescribeArgs& a) {
    const fn::ModelConfig cfg = resolve_config(a.config);

    std::vector<fn::ArchDescriptor> parts;
    if (a.backbone == "none") {
        const fn::Dims in = parse_hw(a.input.empty() ? "8x8" : a.input, a.channels);
        parts.push_back(fn::head_descriptor(cfg.module, a.channels, in, cfg.name + ".head"));
    } else {
        const fn::Dims img = parse_hw(a.input.empty() ? "256x256" : a.input, 3);
        if (a.backbone == "resnet50") {
            parts.push_back(fn::resnet50_descriptor(img));
        } else if (a.backbone == "resnet101") {
            parts.push_back(fn::resnet101_descriptor(img));
        } else if (a.backbone == "toy") {
            parts.push_back(fn::toy_backbone_descriptor(fn::ToyBackboneSpec{}, img));
        } else {
            throw fn::ConfigError("--backbone: expected none, resnet50, resnet101 or toy");
        }
        const fn::ArchLayer& last = parts.back().layers.back();
        parts.push_back(fn::head_descriptor(cfg.module, last.c_out,
                                            fn::Dims{1, last.c_out, last.h_out, last.w_out},
                                            cfg.name + ".head"));
    }
    const fn::ArchLayer& hl = parts.back().layers.back();
    parts.push_back(fn::predictor_descriptor(
        fn::PredictorSpec{hl.c_out, cfg.classes}, fn::Dims{1, hl.c_out, hl.h_out, hl.w_out}));

    std::vector<fn::ComplexityReport> reports;
    for (const auto& part : parts) reports.push_back(fn::analyze(part));
    std::int64_t params = 0, macs = 0;
    for (const auto& r : reports) {
        params += r.total_params;
        macs += r.total_macs;
    }

    if (a.format == "json") {
        nlohmann::json out;
        out["config"] = cfg.name;
        out["parts"] = nlohmann::json::array();
        for (const auto& r : reports) out["parts"].push_back(nlohmann::json::parse(fn::report_json(r)));
        out["total_params"] = params;
        out["total_macs"] = macs;
        std::printf("%s\n", out.dump(2).c_str());
    } else {
        for (const auto& r : reports) std::printf("%s\n", fn::report_text(r).c_str());
        std::printf("combined: %lld params, %lld MACs\n", static_cast<long long>(params),
                    static_cast<long long>(macs));
    }
    return kOk;
}

// --------------------------------------------------------------- gradcheck

int cmd_gradcheck(const std::string& op, bool all, const std::string& dtype) {
    if (dtype != "f64")
        throw fn::ConfigError("gradcheck: finite differences need f64 (f32 noise swamps the "
                              "tolerance); rerun with --dtype f64");
    std::vector<fn::GradCheckCase> cases = fn::standard_gradcheck_cases();
    if (!all) {
        const auto it = std::find_if(cases.begin(), cases.end(),
                                     [&](const fn::GradCheckCase& c) { return c.name == op; });
        if (it == cases.end()) {
            std::string known;
            for (const auto& c : cases) known += "\n  " + c.name;
            throw fn::ConfigError("gradcheck: unknown op \"" + op + "\"; available:" + known);
        }
        cases = {*it};
    }

    bool ok = true;
    std::printf("%-28s %12s %8s %7s  %s\n", "op", "max rel err", "eps", "coords", "status");
    for (const auto& c : cases) {
        const fn::GradCheckReport rep = c.run();
        ok = ok && rep.pass;
        std::printf("%-28s %12.3e %8.0e %7lld  %s\n", rep.op.c_str(), rep.max_rel_err, rep.eps,
                    static_cast<long long>(rep.coords), rep.pass ? "pass" : "FAIL");
    }
    return ok ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------- selftest

struct CheckRow {
    std::string config;
    std::string check;
    std::string status;
    bool ok = true;
};

void selftest_one(const fn::ModelConfig& cfg, std::uint64_t seed, std::vector<CheckRow>& rows) {
    const std::int64_t c_in = 2048;
    cfg.module.validate(c_in); // extra files were validated up front, presets must hold too
    const fn::RearrangeSpec rspec = cfg.module.rearrange_spec(c_in);
    const std::int64_t c_out = cfg.module.out_channels(c_in);
    fn::Rng rng(seed);

    { // rearrangement round-trip, bytewise
        fn::Tensor<double> x(fn::Dims{1, c_out, 2, 2});
        for (double& v : x.values()) v = rng.uniform();
        const bool ok = fn::rearrange_R_inv(fn::rearrange_R(x, rspec), rspec).same_bytes(x);
        rows.push_back({cfg.name, "round-trip", ok ? "exact" : "MISMATCH", ok});
    }

    { // per-layer connectivity of the grouped 1x1 pair
        std::int64_t c = c_in;
        for (std::size_t i = 0; i < cfg.module.layers.size(); ++i) {
            const fn::DwsgConvSpec& l = cfg.module.layers[i];
            const bool dense = fn::connectivity_check(l.g1, l.g2, l.g3, c);
            rows.push_back({cfg.name, "density layer " + std::to_string(i),
                            dense ? "dense" : "NOT DENSE", dense});
            c = l.out_channels(c);
        }
    }

    if (rspec.mode != fn::RearrangeMode::CsPs) {
        rows.push_back({cfg.name, "equivalence", "skipped (no folded form)", true});
        return;
    }

    // training-vs-deployment equivalence on both losses, f64
    const std::int64_t sp = cfg.module.stride_product();
    fn::Rng init = rng.fork(1);
    fn::Sequential<double> trunk(cfg.name);
    std::int64_t c = c_in;
    for (std::size_t i = 0; i < cfg.module.layers.size(); ++i)
        c = fn::append_dwsg(trunk, cfg.module.layers[i], c, "l" + std::to_string(i), init);
    fn::PixelPredictor<double> pred(fn::PredictorSpec{rspec.c_tilde, cfg.classes}, "pred", init,
                                    fn::PixelPredictor<double>::Mode::Affine, rspec.s2);

    fn::Tensor<double> x(fn::Dims{2, c_in, 2 * sp, 2 * sp});
    for (double& v : x.values()) v = rng.uniform() - 0.5;
    const fn::Dims out{2, cfg.classes, 2 * rspec.s2, 2 * rspec.s2};
    fn::Tensor<double> targets(out);
    for (double& v : targets.values()) v = rng.uniform();
    fn::LabelTensor labels(fn::Dims{2, 1, out.h, out.w});
    for (std::int32_t& v : labels.values())
        v = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(cfg.classes)));

    const auto gap = [](const fn::TwoPathResult<double>& r) {
        double g = 0;
        for (std::size_t i = 0; i < r.grads_a.size(); ++i)
            for (std::int64_t j = 0; j < r.grads_a[i].numel(); ++j)
                g = std::max(g, std::abs(r.grads_a[i].values()[static_cast<std::size_t>(j)] -
                                         r.grads_b[i].values()[static_cast<std::size_t>(j)]));
        return g;
    };
    char status[96];
    for (const bool ce : {false, true}) {
        const fn::TwoPathResult<double> r =
            fn::run_two_paths<double>(trunk, rspec, pred, x, ce ? nullptr : &targets,
                                      ce ? &labels : nullptr);
        const double dl = std::abs(r.loss_a - r.loss_b);
        const double dg = gap(r);
        const bool ok = dl <= 1e-12 && dg <= 1e-10;
        std::snprintf(status, sizeof status, "|dloss| %.2e, |dgrad| %.2e%s", dl, dg,
                      ok ? "" : " EXCEEDS TOLERANCE");
        rows.push_back({cfg.name, ce ? "equivalence (ce)" : "equivalence (mse)", status, ok});
    }
}

int cmd_selftest(const std::vector<std::string>& extra, std::uint64_t seed) {
    std::vector<fn::ModelConfig> configs = fn::builtin_configs();
    for (const std::string& path : extra) {
        fn::ModelConfig cfg = fn::load_config(path);
        cfg.module.validate(2048); // bad geometry is a config error, not a check failure
        configs.push_back(std::move(cfg));
    }

    std::vector<CheckRow> rows;
    for (const auto& cfg : configs) selftest_one(cfg, seed, rows);

    bool ok = true;
    std::printf("%-14s %-18s %s\n", "config", "check", "result");
    for (const auto& r : rows) {
        ok = ok && r.ok;
        std::printf("%-14s %-18s %s\n", r.config.c_str(), r.check.c_str(), r.status.c_str());
    }
    std::printf("selftest: %zu checks, %s\n", rows.size(), ok ? "all passed" : "FAILURES above");
    return ok ? kOk : kCheckFailed;
}

// ------------------------------------------------------------ train / eval

struct TaskArgs {
    std::string task = "keypoints";
    std::int64_t image = 64;
    std::int64_t keypoints = 1;
    std::int64_t classes = 4;
    double sigma = 2.0;
    int depth = 5;
};

fn::SyntheticTask make_task(const TaskArgs& a) {
    fn::SyntheticTask t;
    t.kind = a.task == "shapes" ? fn::TaskKind::ShapeSegmentation : fn::TaskKind::KeypointHeatmap;
    t.image_size = a.image;
    t.keypoints = a.keypoints;
    t.classes = a.classes;
    t.sigma = a.sigma;
    return t;
}

struct TrainArgs {
    TaskArgs task;
    std::uint64_t seed = 0;
    std::int64_t epochs = 20;
    std::int64_t steps = 10;
    std::int64_t batch = 8;
    std::int64_t eval_batch = 16;
    double lr = 1e-3;
    bool poly = false;
    bool folded = false;
    std::string out = "train_out";
    std::string dtype = "f32";
};

template <typename T>
int run_train(const TrainArgs& a) {
    fn::TrainConfig cfg;
    cfg.task = make_task(a.task);
    cfg.head = fn::toy_head_spec(a.task.depth);
    cfg.batch = a.batch;
    cfg.eval_batch = a.eval_batch;
    cfg.epochs = a.epochs;
    cfg.steps_per_epoch = a.steps;
    cfg.lr = a.lr;
    cfg.lr_policy = a.poly ? fn::LrPolicy::Poly : fn::LrPolicy::Constant;
    cfg.seed = a.seed;
    cfg.folded = a.folded;
    cfg.history_path = a.out + "/history.jsonl";
    cfg.checkpoint_dir = a.out + "/checkpoint";
    std::filesystem::create_directories(a.out);

    const fn::TrainResult res = fn::train_toy<T>(cfg);
    const char* metric = cfg.task.kind == fn::TaskKind::KeypointHeatmap ? "pckh@0.5" : "miou";
    for (const auto& e : res.history)
        std::printf("step %4lld  lr %.3g  loss %.6f  %s %.4f\n", static_cast<long long>(e.step),
                    e.lr, e.loss, metric, e.metric);
    std::printf("loss %.6f -> %.6f (x%.3f), final %s %.4f\n", res.initial_loss, res.final_loss,
                res.final_loss / res.initial_loss, metric, res.final_metric);
    std::printf("history: %s\ncheckpoint: %s\n", cfg.history_path.c_str(),
                cfg.checkpoint_dir.c_str());
    return kOk;
}

struct EvalArgs {
    TaskArgs task;
    std::string checkpoint;
    std::uint64_t seed = 0;
    std::int64_t eval_batch = 16;
    std::string dtype = "f32";
};

// Rebuilds the model the train flags describe, loads the checkpoint into it,
// and scores the same fixed evaluation batch the training run used (same seed
// fork, batch statistics), so numbers line up with the end of history.
template <typename T>
int run_eval(const EvalArgs& a) {
    if (!std::filesystem::exists(a.checkpoint + "/manifest.json"))
        throw fn::ConfigError("eval: no checkpoint manifest under " + a.checkpoint);

    const fn::SyntheticTask task = make_task(a.task);
    task.validate();
    const bool kp = task.kind == fn::TaskKind::KeypointHeatmap;
    const std::int64_t classes = kp ? task.keypoints : task.classes;

    fn::Rng root(a.seed);
    fn::Rng init_rng = root.fork(1);
    root.fork(2); // training's data fork; drawn here so fork 3 lands on the same stream
    fn::Rng eval_rng = root.fork(3);
    fn::ToyModel<T> model(fn::ToyBackboneSpec{}, fn::toy_head_spec(a.task.depth), classes,
                          init_rng);
    if (model.subsample() != task.s1)
        throw fn::ConfigError("eval: model and task disagree on the prediction stride");
    std::vector<fn::Param<T>*> params = model.params();
    fn::load_checkpoint(a.checkpoint, params);

    double loss = 0, metric = 0;
    if (kp) {
        const fn::KeypointBatch<T> b = fn::gen_keypoints<T>(task, a.eval_batch, eval_rng);
        fn::Tensor<T> pred = model.forward(b.images, true);
        loss = static_cast<double>(fn::mse_loss(pred, b.heatmaps).value);
        const double head_len = static_cast<double>(task.image_size) / (10.0 * task.s1);
        metric = fn::pckh(fn::decode_keypoints(pred), fn::detail::centers_as_keypoints(b.centers),
                          head_len, 0.5);
        std::printf("eval: mse %.6f, pckh@0.5 %.4f (%lld images)\n", loss, metric,
                    static_cast<long long>(a.eval_batch));
    } else {
        const fn::SegBatch<T> b = fn::gen_segmentation<T>(task, a.eval_batch, eval_rng);
        fn::Tensor<T> pred = model.forward(b.images, true);
        loss = static_cast<double>(fn::pixel_softmax_ce(pred, b.labels, classes).value);
        metric = fn::miou(fn::argmax_labels(pred, classes), b.labels, classes);
        std::printf("eval: ce %.6f, miou %.4f (%lld images)\n", loss, metric,
                    static_cast<long long>(a.eval_batch));
    }
    return kOk;
}

// ------------------------------------------------------------- dump / load

fn::Dims parse_dims(const std::string& text) {
    std::vector<std::int64_t> v;
    std::size_t pos = 0;
    try {
        while (pos < text.size()) {
            std::size_t used = 0;
            v.push_back(std::stoll(text.substr(pos), &used));
            pos += used;
            if (pos < text.size()) {
                if (text[pos] != ',' && text[pos] != 'x') break;
                ++pos;
            }
        }
    } catch (const std::exception&) {
        v.clear();
    }
    if (v.size() != 4 || pos != text.size() ||
        std::any_of(v.begin(), v.end(), [](std::int64_t d) { return d < 1; }))
        throw fn::ConfigError("--dims: expected four positive sizes N,C,H,W, got \"" + text + "\"");
    return fn::Dims{v[0], v[1], v[2], v[3]};
}

template <typename T>
void fill_and_write(const std::string& path, fn::Dims dims, std::uint64_t seed) {
    fn::Tensor<T> t(dims);
    fn::Rng rng(seed);
    for (T& v : t.values()) v = static_cast<T>(rng.uniform() * 2.0 - 1.0);
    fn::write_flt1(path, t);
}

template <typename T>
void print_tensor_summary(const fn::Tensor<T>& t, const char* dtype) {
    double lo = t.values().empty() ? 0.0 : static_cast<double>(t.values()[0]);
    double hi = lo, sum = 0;
    for (const T v : t.values()) {
        lo = std::min(lo, static_cast<double>(v));
        hi = std::max(hi, static_cast<double>(v));
        sum += static_cast<double>(v);
    }
    std::printf("%s %s, %lld values, min %.6g max %.6g mean %.6g\n", dtype, t.dims().str().c_str(),
                static_cast<long long>(t.numel()), lo, hi, sum / static_cast<double>(t.numel()));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"flattening-module toolkit"};
    app.require_subcommand(1);

    DescribeArgs da;
    CLI::App* describe = app.add_subcommand("describe", "parameter and MAC report for a config");
    describe->add_option("config", da.config, "config file or preset name")->required();
    describe->add_option("--backbone", da.backbone, "none, resnet50, resnet101 or toy");
    describe->add_option("--input", da.input,
                         "HxW: feature dims without a backbone (default 8x8), image dims with "
                         "one (default 256x256)");
    describe->add_option("--channels", da.channels, "head input channels when no backbone");
    describe->add_option("--format", da.format)->check(CLI::IsMember({"text", "json"}));

    std::string gc_op, gc_dtype = "f64";
    bool gc_all = false;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference backward checks");
    gradcheck->add_option("--op", gc_op, "single op to check");
    gradcheck->add_flag("--all", gc_all, "check every op");
    gradcheck->add_option("--dtype", gc_dtype, "f64 (f32 is rejected)");

    std::vector<std::string> st_extra;
    std::uint64_t st_seed = 0;
    CLI::App* selftest = app.add_subcommand("selftest", "round-trip/equivalence/density checks");
    selftest->add_option("--config", st_extra, "extra config files to include");
    selftest->add_option("--seed", st_seed, "seed for the check inputs");

    TrainArgs ta;
    CLI::App* train = app.add_subcommand("train", "train the toy model on a synthetic task");
    train->add_option("--task", ta.task.task)->check(CLI::IsMember({"keypoints", "shapes"}));
    train->add_option("--seed", ta.seed, "run seed")->required();
    train->add_option("--depth", ta.task.depth, "model depth preset")
        ->check(CLI::IsMember({"5", "6", "7"}));
    train->add_option("--epochs", ta.epochs);
    train->add_option("--steps", ta.steps, "optimizer steps per epoch");
    train->add_option("--batch", ta.batch);
    train->add_option("--eval-batch", ta.eval_batch);
    train->add_option("--lr", ta.lr);
    train->add_flag("--poly", ta.poly, "polynomial lr decay instead of constant");
    train->add_flag("--folded", ta.folded, "train through the folded objective");
    train->add_option("--image", ta.task.image, "image size");
    train->add_option("--keypoints", ta.task.keypoints);
    train->add_option("--classes", ta.task.classes);
    train->add_option("--sigma", ta.task.sigma, "target Gaussian width, heatmap pixels");
    train->add_option("--out", ta.out, "output dir for history and checkpoint");
    train->add_option("--dtype", ta.dtype)->check(CLI::IsMember({"f32", "f64"}));

    EvalArgs ea;
    CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on the evaluation batch");
    eval->add_option("--checkpoint", ea.checkpoint, "checkpoint dir")->required();
    eval->add_option("--task", ea.task.task)->check(CLI::IsMember({"keypoints", "shapes"}));
    eval->add_option("--seed", ea.seed, "seed of the training run")->required();
    eval->add_option("--depth", ea.task.depth)->check(CLI::IsMember({"5", "6", "7"}));
    eval->add_option("--eval-batch", ea.eval_batch);
    eval->add_option("--image", ea.task.image);
    eval->add_option("--keypoints", ea.task.keypoints);
    eval->add_option("--classes", ea.task.classes);
    eval->add_option("--sigma", ea.task.sigma);
    eval->add_option("--dtype", ea.dtype)->check(CLI::IsMember({"f32", "f64"}));

    std::string dump_path, dump_dims = "1,3,8,8", dump_dtype = "f32";
    std::uint64_t dump_seed = 0;
    CLI::App* dump = app.add_subcommand("dump", "write a seeded tensor as an FLT1 file");
    dump->add_option("path", dump_path)->required();
    dump->add_option("--dims", dump_dims, "N,C,H,W");
    dump->add_option("--seed", dump_seed);
    dump->add_option("--dtype", dump_dtype)->check(CLI::IsMember({"f32", "f64"}));

    std::string load_path, load_out;
    CLI::App* load = app.add_subcommand("load", "read an FLT1 file and print a summary");
    load->add_option("path", load_path)->required();
    load->add_option("--out", load_out, "rewrite the tensor to this path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kBadInvocation;
    }

    try {
        if (*describe) return cmd_describe(da);
        if (*gradcheck) {
            if (gc_all == !gc_op.empty())
                throw fn::ConfigError("gradcheck: pass exactly one of --op NAME or --all");
            return cmd_gradcheck(gc_op, gc_all, gc_dtype);
        }
        if (*selftest) return cmd_selftest(st_extra, st_seed);
        if (*train) return ta.dtype == "f64" ? run_train<double>(ta) : run_train<float>(ta);
        if (*eval) return ea.dtype == "f64" ? run_eval<double>(ea) : run_eval<float>(ea);
        if (*dump) {
            const fn::Dims dims = parse_dims(dump_dims);
            if (dump_dtype == "f64")
                fill_and_write<double>(dump_path, dims, dump_seed);
            else
                fill_and_write<float>(dump_path, dims, dump_seed);
            std::printf("wrote %s %s to %s\n", dump_dtype.c_str(), dims.str().c_str(),
                        dump_path.c_str());
            return kOk;
        }
        if (*load) {
            const fn::AnyTensor t = fn::read_flt1(load_path);
            if (const auto* f = std::get_if<fn::Tensor<float>>(&t)) {
                print_tensor_summary(*f, "f32");
                if (!load_out.empty()) fn::write_flt1(load_out, *f);
            } else {
                print_tensor_summary(std::get<fn::Tensor<double>>(t), "f64");
                if (!load_out.empty()) fn::write_flt1(load_out, std::get<fn::Tensor<double>>(t));
            }
            if (!load_out.empty()) std::printf("rewrote to %s\n", load_out.c_str());
            return kOk;
        }
    } catch (const fn::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kBadInvocation;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kBadInvocation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "failed: %s\n", e.what());
        return kCheckFailed;
    }
    return kBadInvocation;
}
