#include "srkit/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <memory>

#include <json.hpp>

#include "srkit/ops.hpp"
#include "srkit/png_io.hpp"
#include "srkit/rng.hpp"

namespace srkit {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

double final_score(double psnr_db, double runtime_ms, ScoreConstant c) {
    if (runtime_ms <= 0.0)
        throw Error("final_score: runtime must be positive, got " + std::to_string(runtime_ms));
    if (c.value <= 0.0)
        throw Error("final_score: score constant must be positive");
    return std::exp2(2.0 * psnr_db) / (c.value * runtime_ms);
}

ScoreConstant fit_constant_from_row(double psnr_db, double runtime_ms, double score) {
    if (runtime_ms <= 0.0 || score <= 0.0)
        throw Error("fit_constant_from_row: degenerate row");
    return {std::exp2(2.0 * psnr_db) / (score * runtime_ms)};
}

ScoreConstant default_score_constant() {
    return fit_constant_from_row(30.03, 19.2, 22.22);
}

FitResult fit_score_constant(std::span<const ScoreRow> rows) {
    if (rows.size() < 2)
        throw Error("fit_score_constant: need at least 2 rows, got " + std::to_string(rows.size()));
    FitResult r;
    double log_sum = 0.0;
    for (const auto& row : rows) {
        const double ci = fit_constant_from_row(row.psnr_db, row.runtime_ms, row.score).value;
        r.per_row.push_back(ci);
        log_sum += std::log(ci);
    }
    r.geo_mean = std::exp(log_sum / double(rows.size()));
    for (double ci : r.per_row)
        r.max_rel_spread = std::max(r.max_rel_spread, std::fabs(ci / r.geo_mean - 1.0));
    return r;
}

std::vector<DatasetPair> discover_pairs(const std::string& lr_dir, const std::string& hr_dir) {
    if (!fs::is_directory(hr_dir))
        throw IoError("hr dir '" + hr_dir + "' is not a directory");
    if (!fs::is_directory(lr_dir))
        throw IoError("lr dir '" + lr_dir + "' is not a directory");

    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(hr_dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".png")
            continue;
        stems.push_back(e.path().stem().string());
    }
    std::sort(stems.begin(), stems.end());
    if (stems.empty())
        throw IoError("no PNG images found in '" + hr_dir + "'");

    std::vector<DatasetPair> pairs;
    for (const auto& stem : stems) {
        DatasetPair p;
        p.stem = stem;
        p.hr_path = (fs::path(hr_dir) / (stem + ".png")).string();
        p.lr_path = (fs::path(lr_dir) / (stem + "x3.png")).string();
        if (!fs::exists(p.lr_path))
            throw IoError("missing low-resolution file '" + p.lr_path + "' for '" + p.hr_path + "'");
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::pair<ImageU8, ImageU8> load_cropped_pair(const DatasetPair& p, int scale) {
    ImageU8 lr = load_png(p.lr_path);
    ImageU8 hr = load_png(p.hr_path);
    const auto ceil_div = [](int a, int b) { return (a + b - 1) / b; };
    if (lr.h != ceil_div(hr.h, scale) || lr.w != ceil_div(hr.w, scale))
        throw IoError("'" + p.lr_path + "' (" + std::to_string(lr.h) + "x" + std::to_string(lr.w) +
                      ") is not ceil(1/" + std::to_string(scale) + ") of '" + p.hr_path + "' (" +
                      std::to_string(hr.h) + "x" + std::to_string(hr.w) + ")");
    const int lh = hr.h / scale, lw = hr.w / scale;
    return {crop(lr, lh, lw), crop(hr, lh * scale, lw * scale)};
}

ImageU8 GraphUpscaler::upscale(const ImageU8& lr) const {
    return tensor_to_image(execute(*g_, image_to_tensor(lr)));
}

ImageU8 QuantGraphUpscaler::upscale(const ImageU8& lr) const {
    const TensorI8 in = quantize(image_to_tensor(lr), qg_->input_params());
    return tensor_to_image(dequantize(execute_int8(*qg_, in)));
}

ImageU8 BicubicUpscaler::upscale(const ImageU8& lr) const {
    return tensor_to_image(resize_bicubic(image_to_tensor(lr), double(scale_), false));
}

ImageU8 NearestUpscaler::upscale(const ImageU8& lr) const {
    return tensor_to_image(resize_nearest(image_to_tensor(lr), scale_));
}

namespace {

double percentile(std::vector<double> v, double p) {
    // nearest-rank on the sorted samples
    std::sort(v.begin(), v.end());
    const int n = int(v.size());
    int rank = int(std::ceil(p / 100.0 * n));
    rank = std::clamp(rank, 1, n);
    return v[size_t(rank - 1)];
}

json protocol_json() {
    // the challenge never published these details; the choices are pinned
    // here and surfaced in every report
    return {{"psnr", "rgb, full frame, no border crop, mean of per-image values"},
            {"ssim", "11x11 gaussian window sigma 1.5, valid positions, channel mean"},
            {"runtime", "host CPU milliseconds; not comparable to NPU-reported numbers"}};
}

} // namespace

std::string EvalReport::to_json(bool include_timing) const {
    json j;
    j["model"] = model;
    j["int8"] = int8;
    j["scale"] = scale;
    j["protocol"] = protocol_json();
    json agg;
    agg["mean_psnr_db"] = mean_psnr_db;
    agg["mean_ssim"] = mean_ssim;
    if (include_timing) {
        j["score_constant"] = score_constant;
        agg["median_ms"] = median_ms;
        agg["p10_ms"] = p10_ms;
        agg["p90_ms"] = p90_ms;
        agg["final_score"] = final_score;
    }
    j["aggregate"] = std::move(agg);
    j["images"] = json::array();
    for (const auto& im : images) {
        json ij;
        ij["name"] = im.name;
        ij["psnr_db"] = im.psnr_db;
        ij["ssim"] = im.ssim;
        if (include_timing)
            ij["runtime_ms"] = im.runtime_ms;
        j["images"].push_back(std::move(ij));
    }
    return j.dump(2);
}

std::string EvalReport::to_csv() const {
    std::string out = "name,psnr_db,ssim,runtime_ms\n";
    char buf[160];
    for (const auto& im : images) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.4f\n", im.name.c_str(), im.psnr_db, im.ssim,
                      im.runtime_ms);
        out += buf;
    }
    return out;
}

EvalReport evaluate_sources(const Upscaler& model, const std::vector<PairSource>& sources,
                            ScoreConstant c) {
    if (sources.empty())
        throw IoError("evaluate_sources: no image pairs");
    EvalReport rep;
    rep.model = model.describe();
    rep.scale = model.scale();
    rep.score_constant = c.value;
    rep.images.resize(sources.size());

    std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic)
    for (int64_t i = 0; i < int64_t(sources.size()); ++i) {
        try {
            auto [lr, hr] = sources[size_t(i)].load();
            const auto t0 = std::chrono::steady_clock::now();
            const ImageU8 sr = model.upscale(lr);
            const auto t1 = std::chrono::steady_clock::now();
            PerImageResult r;
            r.name = sources[size_t(i)].name;
            r.runtime_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            r.psnr_db = psnr(sr, hr);
            r.ssim = ssim(sr, hr);
            rep.images[size_t(i)] = std::move(r);
        } catch (...) {
#pragma omp critical
            if (!first_error)
                first_error = std::current_exception();
        }
    }
    if (first_error)
        std::rethrow_exception(first_error);

    std::vector<double> times;
    for (const auto& im : rep.images) {
        rep.mean_psnr_db += im.psnr_db;
        rep.mean_ssim += im.ssim;
        times.push_back(im.runtime_ms);
    }
    rep.mean_psnr_db /= double(rep.images.size());
    rep.mean_ssim /= double(rep.images.size());
    rep.median_ms = percentile(times, 50.0);
    rep.p10_ms = percentile(times, 10.0);
    rep.p90_ms = percentile(times, 90.0);
    rep.final_score = final_score(rep.mean_psnr_db, rep.median_ms, c);
    return rep;
}

EvalReport eval_dataset(const Upscaler& model, const std::string& lr_dir,
                        const std::string& hr_dir, ScoreConstant c) {
    const auto pairs = discover_pairs(lr_dir, hr_dir);
    const int scale = model.scale();
    std::vector<PairSource> sources;
    for (const auto& p : pairs)
        sources.push_back({p.stem, [p, scale] { return load_cropped_pair(p, scale); }});
    return evaluate_sources(model, sources, c);
}

EvalReport eval_baseline(const std::string& hr_dir, const std::string& method, int scale,
                         const std::string& lr_dir, ScoreConstant c) {
    std::unique_ptr<Upscaler> up;
    if (method == "bicubic")
        up = std::make_unique<BicubicUpscaler>(scale);
    else if (method == "nearest")
        up = std::make_unique<NearestUpscaler>(scale);
    else
        throw Error("unknown baseline method '" + method + "' (expected bicubic or nearest)");

    if (!lr_dir.empty())
        return eval_dataset(*up, lr_dir, hr_dir, c);

    if (!fs::is_directory(hr_dir))
        throw IoError("hr dir '" + hr_dir + "' is not a directory");
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(hr_dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw IoError("no PNG images found in '" + hr_dir + "'");

    std::vector<PairSource> sources;
    for (const auto& f : files) {
        sources.push_back({fs::path(f).stem().string(), [f, scale] {
                               // regenerate the LR input the DIV2K way:
                               // antialiased bicubic downscale of the cropped HR
                               const ImageU8 hr = crop_to_multiple(load_png(f), scale);
                               const ImageU8 lr = tensor_to_image(
                                   resize_bicubic(image_to_tensor(hr), 1.0 / scale, true));
                               return std::pair<ImageU8, ImageU8>(lr, hr);
                           }});
    }
    return evaluate_sources(*up, sources, c);
}

uint64_t fnv1a64(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string BenchResult::to_json() const {
    json j;
    j["median_ms"] = median_ms;
    j["p10_ms"] = p10_ms;
    j["p90_ms"] = p90_ms;
    j["warmup"] = warmup;
    j["iters"] = iters;
    j["output_checksum"] = output_checksum;
    j["checksum_stable"] = checksum_stable;
    j["note"] = "host CPU milliseconds; not comparable to NPU-reported numbers";
    j["samples_ms"] = samples_ms;
    return j.dump(2);
}

BenchResult bench(const Upscaler& model, int h, int w, int warmup, int iters, uint64_t seed) {
    if (iters < 1)
        throw Error("bench: iters must be >= 1");
    Rng rng(seed);
    ImageU8 input(h, w);
    for (auto& v : input.data)
        v = uint8_t(rng.uniform_int(0, 255));

    BenchResult r;
    r.warmup = warmup;
    r.iters = iters;
    r.checksum_stable = true;
    for (int i = 0; i < warmup; ++i)
        (void)model.upscale(input);
    for (int i = 0; i < iters; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const ImageU8 out = model.upscale(input);
        const auto t1 = std::chrono::steady_clock::now();
        r.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        const uint64_t sum = fnv1a64(out.data.data(), out.data.size());
        if (i == 0)
            r.output_checksum = sum;
        else if (sum != r.output_checksum)
            r.checksum_stable = false;
    }
    r.median_ms = percentile(r.samples_ms, 50.0);
    r.p10_ms = percentile(r.samples_ms, 10.0);
    r.p90_ms = percentile(r.samples_ms, 90.0);
    return r;
}

void make_synthetic_dataset(const std::string& dir, int count, uint64_t seed) {
    const fs::path root(dir);
    fs::create_directories(root / "hr");
    fs::create_directories(root / "lr");
    Rng rng(seed);
    const int sizes[][2] = {{96, 96}, {120, 96}, {96, 120}, {108, 108}, {96, 144}};

    for (int i = 0; i < count; ++i) {
        const int h = sizes[i % 5][0], w = sizes[i % 5][1];
        TensorF32 hr({h, w, 3});
        const double fx = rng.uniform(0.01, 0.06), fy = rng.uniform(0.01, 0.06);
        const double phase[3] = {rng.uniform(0, 6.28), rng.uniform(0, 6.28), rng.uniform(0, 6.28)};
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ch = 0; ch < 3; ++ch) {
                    double v = 127.5 + 55.0 * std::sin(6.28318 * (fx * x + fy * y) + phase[ch]) +
                               50.0 * (double(x) / w - 0.5) + 30.0 * (double(y) / h - 0.5) +
                               rng.uniform(-2.0, 2.0);
                    hr.at(y, x, ch) = float(std::clamp(v, 0.0, 255.0));
                }
        const ImageU8 hr_img = tensor_to_image(hr);
        const ImageU8 lr_img =
            tensor_to_image(resize_bicubic(image_to_tensor(hr_img), 1.0 / 3.0, true));

        char name[16];
        std::snprintf(name, sizeof name, "%04d", i + 1);
        save_png(hr_img, (root / "hr" / (std::string(name) + ".png")).string());
        save_png(lr_img, (root / "lr" / (std::string(name) + "x3.png")).string());
    }
}

} // namespace srkit
