#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "wdnet/config.hpp"
#include "wdnet/kernels.hpp"
#include "wdnet/trainer.hpp"
#include "wdnet/wavelet.hpp"

namespace fs = std::filesystem;
using namespace wdnet;

namespace {

std::string one_line(std::string s) {
    for (char& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

RunConfig config_or_default(const std::string& path) {
    return path.empty() ? RunConfig{} : load_run_config(path);
}

std::string band_file(int i, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "band_%03d.%s", i, ext);
    return buf;
}

// ---- decompose / reconstruct ------------------------------------------------

struct DecomposeArgs {
    std::string input, out;
    int level = 2;
};

void cmd_decompose(const DecomposeArgs& a) {
    const Image8 img = read_png(a.input);
    const SubbandStack s = fwt2(to_tensor(img), WaveletConfig{a.level});
    const int n = s.bands.dim(1), h = s.bands.dim(2), w = s.bands.dim(3);
    const auto labels = band_ordering(a.level);
    fs::create_directories(a.out);
    std::ofstream manifest(fs::path(a.out) / "manifest.txt");
    manifest << "layout=" << s.layout << "\nlevel=" << a.level << "\nwidth=" << img.width
             << "\nheight=" << img.height << "\nbands=" << n << "\n";
    const auto data = s.bands.data();
    for (int i = 0; i < n; ++i) {
        const float* band = data.data() + static_cast<std::size_t>(i) * h * w;
        const auto [lo, hi] = std::minmax_element(band, band + static_cast<std::size_t>(h) * w);
        Image8 png(w, h, 1);
        for (std::size_t q = 0; q < png.pixels.size(); ++q) {
            const double t = *hi > *lo ? (band[q] - *lo) / (*hi - *lo) : 0.0;
            png.pixels[q] = static_cast<std::uint8_t>(std::lround(255 * t));
        }
        write_png(fs::path(a.out) / band_file(i, "png"), png);
        std::ofstream raw(fs::path(a.out) / band_file(i, "f32"), std::ios::binary);
        raw.write(reinterpret_cast<const char*>(band), static_cast<std::streamsize>(sizeof(float) * h * w));
        if (!raw) throw Error("failed writing " + band_file(i, "f32"));
        manifest << "band " << i << ' ' << labels[i] << ' ' << band_file(i, "png") << ' ' << band_file(i, "f32") << "\n";
    }
    std::cout << "wrote " << n << " bands of " << w << "x" << h << " to " << a.out << "\n";
}

struct ReconstructArgs {
    std::string in, out;
};

void cmd_reconstruct(const ReconstructArgs& a) {
    const fs::path dir(a.in);
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest) throw Error("missing manifest.txt in " + a.in);
    std::string layout;
    int level = 0, width = 0, height = 0, bands = 0;
    for (std::string line; std::getline(manifest, line);) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq), v = line.substr(eq + 1);
        if (key == "layout") layout = v;
        else if (key == "level") level = std::stoi(v);
        else if (key == "width") width = std::stoi(v);
        else if (key == "height") height = std::stoi(v);
        else if (key == "bands") bands = std::stoi(v);
    }
    WaveletConfig{level}.validate();
    if (bands != band_count(level)) throw Error("manifest band count does not match its level");
    const int h = height >> level, w = width >> level;
    std::vector<float> values(static_cast<std::size_t>(bands) * h * w);
    for (int i = 0; i < bands; ++i) {
        const fs::path p = dir / band_file(i, "f32");
        std::ifstream raw(p, std::ios::binary);
        if (!raw) throw Error("missing sidecar " + p.string());
        raw.read(reinterpret_cast<char*>(values.data() + static_cast<std::size_t>(i) * h * w),
                 static_cast<std::streamsize>(sizeof(float) * h * w));
        if (raw.gcount() != static_cast<std::streamsize>(sizeof(float) * h * w) || raw.peek() != EOF) {
            throw Error("sidecar " + p.string() + " has the wrong size");
        }
    }
    const SubbandStack s{level, Tensor::from_data({1, bands, h, w}, std::move(values)), layout};
    write_png(a.out, from_tensor(ifwt2(s)));
    std::cout << "wrote " << a.out << "\n";
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
    std::string config, out;
    int count = 16;
    std::uint64_t seed = 0;
};

void cmd_synth(const SynthArgs& a) {
    const RunConfig rc = config_or_default(a.config);
    const auto pairs = synth_dataset(rc.synth, a.count, a.seed);
    fs::create_directories(a.out);
    write_pairs(a.out, pairs);
    std::cout << "wrote " << pairs.size() << " pairs to " << a.out << "\n";
}

// ---- train / infer / eval ---------------------------------------------------

struct TrainArgs {
    std::string config, data, out, resume;
    std::optional<long> steps;
};

void cmd_train(const TrainArgs& a) {
    RunConfig rc = config_or_default(a.config);
    if (a.steps) rc.train.steps = *a.steps;
    rc.validate();
    const std::string data_dir = a.data.empty() ? rc.data_dir : a.data;
    if (data_dir.empty()) throw Error("no dataset: pass --data or set data.dir");
    const auto data = load_dataset(data_dir, rc.load);
    if (data.empty()) throw Error("dataset " + data_dir + " has no pairs");

    WDNet model(rc.model, rc.train.seed);
    TrainState resumed;
    if (!a.resume.empty()) {
        const Checkpoint ck = load_checkpoint(a.resume, &rc.model);
        ck.restore_into(model);
        resumed = ck.state;
    }
    Trainer trainer(model, rc.train);
    if (!a.resume.empty()) trainer.state() = resumed;

    auto save = [&] { save_checkpoint(a.out, Checkpoint::capture(model, trainer.state())); };
    if (rc.train.steps == 0) {
        std::vector<const MoirePair*> first;
        for (std::size_t i = 0; i < data.size() && first.size() < static_cast<std::size_t>(rc.train.batch_size); ++i) {
            first.push_back(&data[i]);
        }
        std::cout << "step=0 epoch=" << trainer.state().epoch << " " << trainer.evaluate_loss(first).to_string()
                  << std::endl;
    } else {
        trainer.fit(data, [&](std::uint64_t step, std::uint64_t epoch, const LossBreakdown& loss) {
            std::cout << "step=" << step << " epoch=" << epoch << " lr=" << trainer.current_lr() << " "
                      << loss.to_string() << std::endl;
            if (rc.train.checkpoint_every > 0 && step % rc.train.checkpoint_every == 0) save();
        });
    }
    save();
    std::cout << "wrote " << a.out << "\n";
}

struct InferArgs {
    std::string ckpt, input, output;
};

void cmd_infer(const InferArgs& a) {
    const WDNet model = load_checkpoint(a.ckpt).build_model();
    write_png(a.output, infer(model, read_png(a.input)));
    std::cout << "wrote " << a.output << "\n";
}

struct EvalArgs {
    std::string ckpt, data, config;
};

void cmd_eval(const EvalArgs& a) {
    const RunConfig rc = config_or_default(a.config);
    const WDNet model = load_checkpoint(a.ckpt).build_model();
    const auto pairs = load_dataset(a.data, rc.load);
    std::cout << evaluate(model, pairs).table();
}

// ---- viz-diff ---------------------------------------------------------------

struct VizArgs {
    std::string a, b, out;
    int level = 2;
};

void cmd_viz_diff(const VizArgs& v) {
    const Image8 a = read_png(v.a), b = read_png(v.b);
    if (!a.same_size(b)) throw Error("images differ in size");
    const auto report = subband_diff_report(a, b, WaveletConfig{v.level});
    fs::create_directories(v.out);
    write_png(fs::path(v.out) / "grid.png", report.grid());
    std::ofstream(fs::path(v.out) / "table.txt") << report.table();
    std::cout << report.table();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wavelet-domain image demoireing toolkit", "wdnet"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);

    DecomposeArgs dec;
    auto* c_dec = app.add_subcommand("decompose", "Write the wavelet packet bands of an image");
    c_dec->add_option("--input", dec.input, "Input PNG")->required()->check(CLI::ExistingFile);
    c_dec->add_option("--level", dec.level, "Decomposition depth")->check(CLI::Range(1, 3));
    c_dec->add_option("--out", dec.out, "Output directory")->required();

    ReconstructArgs rec;
    auto* c_rec = app.add_subcommand("reconstruct", "Rebuild an image from decompose output");
    c_rec->add_option("--in", rec.in, "Directory written by decompose")->required()->check(CLI::ExistingDirectory);
    c_rec->add_option("--out", rec.out, "Output PNG")->required();

    SynthArgs syn;
    auto* c_syn = app.add_subcommand("synth", "Generate synthetic moire/clean/mask triples");
    c_syn->add_option("--config", syn.config, "Run configuration file")->check(CLI::ExistingFile);
    c_syn->add_option("--count", syn.count, "Number of pairs")->check(CLI::NonNegativeNumber);
    c_syn->add_option("--seed", syn.seed, "Dataset seed");
    c_syn->add_option("--out", syn.out, "Output directory")->required();

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "Train on a paired dataset");
    c_tr->add_option("--config", tr.config, "Run configuration file")->check(CLI::ExistingFile);
    c_tr->add_option("--data", tr.data, "Dataset directory with moire/ and clean/")->check(CLI::ExistingDirectory);
    c_tr->add_option("--out", tr.out, "Checkpoint path")->required();
    c_tr->add_option("--steps", tr.steps, "Optimizer step cap, overrides train.steps (-1 = none)");
    c_tr->add_option("--resume", tr.resume, "Continue from this checkpoint")->check(CLI::ExistingFile);

    InferArgs inf;
    auto* c_inf = app.add_subcommand("infer", "Restore one image");
    c_inf->add_option("--ckpt", inf.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    c_inf->add_option("--input", inf.input, "Input PNG")->required()->check(CLI::ExistingFile);
    c_inf->add_option("--output", inf.output, "Output PNG")->required();

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "PSNR/SSIM of restored and contaminated images");
    c_ev->add_option("--ckpt", ev.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    c_ev->add_option("--data", ev.data, "Dataset directory with moire/ and clean/")->required()->check(CLI::ExistingDirectory);
    c_ev->add_option("--config", ev.config, "Run configuration file (data.* keys)")->check(CLI::ExistingFile);

    VizArgs viz;
    auto* c_viz = app.add_subcommand("viz-diff", "Per-band difference of two images");
    c_viz->add_option("--a", viz.a, "First PNG")->required()->check(CLI::ExistingFile);
    c_viz->add_option("--b", viz.b, "Second PNG")->required()->check(CLI::ExistingFile);
    c_viz->add_option("--out", viz.out, "Output directory")->required();
    c_viz->add_option("--level", viz.level, "Decomposition depth")->check(CLI::Range(1, 3));

    bool with_docs = false;
    auto* c_cfg = app.add_subcommand("config", "Print every configuration key with its default");
    c_cfg->add_flag("--docs", with_docs, "Precede each key with its description");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        if (threads > 0) kernels::set_threads(threads);
        if (*c_dec) cmd_decompose(dec);
        else if (*c_rec) cmd_reconstruct(rec);
        else if (*c_syn) cmd_synth(syn);
        else if (*c_tr) cmd_train(tr);
        else if (*c_inf) cmd_infer(inf);
        else if (*c_ev) cmd_eval(ev);
        else if (*c_viz) cmd_viz_diff(viz);
        else if (*c_cfg) std::cout << to_text(RunConfig{}, with_docs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << app.get_subcommands().front()->get_name() << ": " << one_line(e.what()) << "\n";
        return 1;
    }
    return 0;
}
