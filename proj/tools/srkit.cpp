#include <algorithm>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "srkit/eval.hpp"
#include "srkit/model_io.hpp"
#include "srkit/png_io.hpp"
#include "srkit/reparam.hpp"

using namespace srkit;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f)
        throw IoError("cannot write '" + path + "'");
    f << text;
}

std::vector<ScoreRow> read_score_table(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw IoError("cannot open '" + path + "'");
    std::vector<ScoreRow> rows;
    std::string line;
    while (std::getline(f, line)) {
        ScoreRow r;
        char* end = nullptr;
        const char* s = line.c_str();
        r.psnr_db = std::strtod(s, &end);
        if (end == s)
            continue; // header or blank line
        if (*end == ',')
            ++end;
        s = end;
        r.runtime_ms = std::strtod(s, &end);
        if (end == s || *end != ',')
            continue;
        s = end + 1;
        r.score = std::strtod(s, &end);
        if (end == s)
            continue;
        rows.push_back(r);
    }
    return rows;
}

struct LoadedModel {
    Graph g;
    QuantizedGraph qg;
    bool quantized = false;
};

LoadedModel load_any(const std::string& path, bool want_int8) {
    LoadedModel m;
    m.quantized = model_is_quantized(path);
    if (m.quantized)
        m.qg = load_quantized_model(path);
    else
        m.g = load_model(path);
    if (want_int8 && !m.quantized)
        throw FormatError("--int8 given but '" + path + "' is a float32 model; run `quantize` first");
    return m;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Runtime and toolkit for quantized plain-convolution 3x image super-resolution:\n"
                 "graph execution (float / INT8), structural re-parametrization, post-training\n"
                 "quantization and the challenge evaluation protocol (PSNR / SSIM / Final Score)."};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "worker threads for data-parallel kernels (0 = all cores)");

    // create
    auto* create = app.add_subcommand("create", "build a reference architecture with seeded weights");
    std::string arch = "abpn", out_path;
    int channels = 0, layers = 0;
    uint64_t seed = 1;
    create->add_option("--arch", arch, "abpn|scsrn|ncnet|plainnet|dual-branch")->required();
    create->add_option("--out", out_path, "output model stem (writes .json + .bin)")->required();
    create->add_option("--channels", channels, "feature channels (architecture default if omitted)");
    create->add_option("--layers", layers, "body layers (architecture default if omitted)");
    create->add_option("--seed", seed, "weight init seed");

    // run
    auto* run = app.add_subcommand("run", "upscale one PNG with a model");
    std::string model_path, input_png, output_png;
    bool int8 = false;
    run->add_option("--model", model_path)->required();
    run->add_option("--input", input_png)->required();
    run->add_option("--output", output_png)->required();
    run->add_flag("--int8", int8, "require an int8 model and run the integer engine");

    // collapse
    auto* collapse = app.add_subcommand("collapse", "fuse re-parameterizable structures into plain convs");
    std::string collapse_model, collapse_out, collapse_report;
    collapse->add_option("--model", collapse_model)->required();
    collapse->add_option("--out", collapse_out)->required();
    collapse->add_option("--report", collapse_report, "write the rewrite report as JSON");

    // quantize
    auto* quant = app.add_subcommand("quantize", "post-training INT8 quantization");
    std::string q_model, q_calib, q_out, q_scheme = "per-channel";
    quant->add_option("--model", q_model)->required();
    quant->add_option("--calib", q_calib, "directory of calibration PNGs")->required();
    quant->add_option("--scheme", q_scheme, "per-channel|per-tensor")
        ->check(CLI::IsMember({"per-channel", "per-tensor"}));
    quant->add_option("--out", q_out)->required();

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a model over an LR/HR dataset");
    std::string e_model, e_lr, e_hr, e_report, e_csv;
    bool e_int8 = false;
    double e_c = 0.0;
    eval->add_option("--model", e_model)->required();
    eval->add_option("--lr-dir", e_lr)->required();
    eval->add_option("--hr-dir", e_hr)->required();
    eval->add_flag("--int8", e_int8);
    eval->add_option("--report", e_report, "write the report as JSON");
    eval->add_option("--csv", e_csv, "write per-image rows as CSV");
    eval->add_option("--c", e_c, "score normalization constant (default: fitted)");

    // baseline
    auto* baseline = app.add_subcommand("baseline", "bicubic/nearest reference over an HR dataset");
    std::string b_hr, b_lr, b_method = "bicubic", b_report;
    int b_scale = 3;
    baseline->add_option("--hr-dir", b_hr)->required();
    baseline->add_option("--scale", b_scale);
    baseline->add_option("--method", b_method, "bicubic|nearest")
        ->check(CLI::IsMember({"bicubic", "nearest"}));
    baseline->add_option("--lr-dir", b_lr, "use these LR inputs instead of regenerating them");
    baseline->add_option("--report", b_report, "write the report as JSON");

    // score
    auto* score = app.add_subcommand("score", "challenge score for a (PSNR, runtime) pair");
    double s_psnr = 0.0, s_runtime = 0.0, s_c = 0.0;
    score->add_option("--psnr", s_psnr)->required();
    score->add_option("--runtime-ms", s_runtime)->required();
    score->add_option("--c", s_c, "score normalization constant (default: fitted)");

    // fit-c
    auto* fitc = app.add_subcommand("fit-c", "fit the normalization constant from leaderboard rows");
    std::string f_table;
    fitc->add_option("--table", f_table, "CSV rows: psnr,runtime_ms,score")->required();

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "wall-clock benchmark on a random input");
    std::string bn_model;
    int bn_w = 640, bn_h = 360, bn_iters = 50, bn_warmup = 5;
    bool bn_int8 = false;
    bench_cmd->add_option("--model", bn_model)->required();
    bench_cmd->add_option("--width", bn_w);
    bench_cmd->add_option("--height", bn_h);
    bench_cmd->add_option("--iters", bn_iters);
    bench_cmd->add_option("--warmup", bn_warmup);
    bench_cmd->add_flag("--int8", bn_int8);

    // make-dataset
    auto* mkds = app.add_subcommand("make-dataset", "write a synthetic LR/HR mini dataset");
    std::string d_out;
    int d_count = 5;
    uint64_t d_seed = 7;
    mkds->add_option("--out", d_out)->required();
    mkds->add_option("--count", d_count);
    mkds->add_option("--seed", d_seed);

    CLI11_PARSE(app, argc, argv);
    set_worker_threads(threads);

    try {
        if (*create) {
            const Graph g = build_by_name(arch, channels, layers, seed);
            save_model(g, out_path);
            std::cout << "wrote " << out_path << ".json/.bin (" << g.nodes.size() << " nodes)\n";
        } else if (*run) {
            const LoadedModel m = load_any(model_path, int8);
            const ImageU8 in = load_png(input_png);
            ImageU8 out;
            if (m.quantized) {
                out = QuantGraphUpscaler(m.qg).upscale(in);
            } else {
                out = GraphUpscaler(m.g).upscale(in);
            }
            save_png(out, output_png);
            std::cout << "wrote " << output_png << " (" << out.w << "x" << out.h << ")\n";
        } else if (*collapse) {
            const Graph g = load_model(collapse_model);
            auto [collapsed, report] = collapse_graph(g);
            save_model(collapsed, collapse_out);
            if (!collapse_report.empty())
                write_text(collapse_report, report.to_json());
            std::cout << "nodes " << report.node_count_before << " -> " << report.node_count_after
                      << ", max divergence " << report.max_abs_divergence << "\n";
        } else if (*quant) {
            const Graph g = load_model(q_model);
            std::vector<std::string> calib_files;
            for (const auto& e : std::filesystem::directory_iterator(q_calib))
                if (e.is_regular_file() && e.path().extension() == ".png")
                    calib_files.push_back(e.path().string());
            std::sort(calib_files.begin(), calib_files.end()); // deterministic ranges
            std::vector<TensorF32> calib_images;
            for (const auto& f : calib_files)
                calib_images.push_back(image_to_tensor(load_png(f)));
            if (calib_images.empty())
                throw IoError("no calibration PNGs in '" + q_calib + "'");
            const CalibrationRange cal = calibrate(g, calib_images);
            const WeightScheme scheme =
                q_scheme == "per-tensor" ? WeightScheme::PerTensor : WeightScheme::PerChannel;
            const QuantizedGraph qg = quantize_graph(g, cal, scheme);
            save_quantized_model(qg, q_out);
            std::cout << "wrote " << q_out << ".json/.bin (" << q_scheme << ", "
                      << calib_images.size() << " calibration images)\n";
        } else if (*eval) {
            const ScoreConstant c{e_c > 0.0 ? e_c : default_score_constant().value};
            const LoadedModel m = load_any(e_model, e_int8);
            EvalReport rep;
            if (m.quantized) {
                rep = eval_dataset(QuantGraphUpscaler(m.qg, e_model), e_lr, e_hr, c);
                rep.int8 = true;
            } else {
                rep = eval_dataset(GraphUpscaler(m.g, e_model), e_lr, e_hr, c);
            }
            if (!e_report.empty())
                write_text(e_report, rep.to_json());
            if (!e_csv.empty())
                write_text(e_csv, rep.to_csv());
            std::cout << rep.to_json() << "\n";
        } else if (*baseline) {
            const EvalReport rep =
                eval_baseline(b_hr, b_method, b_scale, b_lr, default_score_constant());
            if (!b_report.empty())
                write_text(b_report, rep.to_json());
            std::cout << rep.to_json() << "\n";
        } else if (*score) {
            const ScoreConstant c{s_c > 0.0 ? s_c : default_score_constant().value};
            std::cout << final_score(s_psnr, s_runtime, c) << "\n";
        } else if (*fitc) {
            const auto rows = read_score_table(f_table);
            const FitResult r = fit_score_constant(rows);
            std::cout << "C = " << r.geo_mean << " (max relative spread "
                      << r.max_rel_spread * 100.0 << "% over " << r.per_row.size() << " rows)\n";
        } else if (*bench_cmd) {
            const LoadedModel m = load_any(bn_model, bn_int8);
            BenchResult r;
            if (m.quantized)
                r = bench(QuantGraphUpscaler(m.qg, bn_model), bn_h, bn_w, bn_warmup, bn_iters);
            else
                r = bench(GraphUpscaler(m.g, bn_model), bn_h, bn_w, bn_warmup, bn_iters);
            std::cout << r.to_json() << "\n";
        } else if (*mkds) {
            make_synthetic_dataset(d_out, d_count, d_seed);
            std::cout << "wrote " << d_count << " HR/LR pairs under " << d_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
