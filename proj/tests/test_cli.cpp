#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>
#include <unistd.h>

#include "doctest.h"
#include "test_util.hpp"
#include "wdnet/config.hpp"
#include "wdnet/datagen.hpp"

using namespace wdnet;
namespace fs = std::filesystem;

namespace {

struct Run {
    int rc;
    std::string out;
};

// Runs the tool with stderr folded into the captured output.
Run wdnet_cli(const std::string& args) {
    const std::string cmd = std::string(WDNET_CLI) + " " + args + " 2>&1";
    FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::string out;
    std::array<char, 4096> buf;
    for (std::size_t n; (n = std::fread(buf.data(), 1, buf.size(), p)) > 0;) out.append(buf.data(), n);
    const int status = ::pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("wdnet_cli_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

// Tiny identity model plus a small synthetic dataset.
void write_tiny_setup(const TempDir& t) {
    std::ofstream(t / "tiny.cfg") << "model.width=8\nmodel.num_modules=2\nmodel.dilation_rates=1,2\n"
                                     "model.dpm_module_index=2\nmodel.dpm_hidden=4\nmodel.dense_growth=4\n"
                                     "model.init_noise=0\nsynth.width=32\nsynth.height=32\ntrain.batch_size=2\n";
}

}  // namespace

TEST_CASE("help output matches the golden files") {
    const fs::path golden = WDNET_GOLDEN_DIR;
    auto top = wdnet_cli("--help");
    CHECK(top.rc == 0);
    CHECK(top.out == slurp(golden / "help.txt"));
    for (const char* sub : {"decompose", "reconstruct", "synth", "train", "infer", "eval", "viz-diff", "config"}) {
        CAPTURE(sub);
        auto r = wdnet_cli(std::string(sub) + " --help");
        CHECK(r.rc == 0);
        CHECK(r.out == slurp(golden / ("help_" + std::string(sub) + ".txt")));
    }
}

TEST_CASE("usage errors exit 2 with one line") {
    for (const char* args : {"", "bogus", "decompose --level 2", "synth --out x --count -1", "train --steps 1"}) {
        CAPTURE(args);
        auto r = wdnet_cli(args);
        CHECK(r.rc == 2);
        CHECK(count_lines(r.out) == 1);
        CHECK(r.out.rfind("error: ", 0) == 0);
    }
}

TEST_CASE("config prints every key") {
    auto r = wdnet_cli("config");
    CHECK(r.rc == 0);
    CHECK(r.out == to_text(RunConfig{}));
    CHECK(count_lines(r.out) == static_cast<int>(run_config_keys().size()));
    auto d = wdnet_cli("config --docs");
    CHECK(count_lines(d.out) == 2 * static_cast<int>(run_config_keys().size()));
}

TEST_CASE("decompose and reconstruct") {
    TempDir t("dec");
    const auto img = test::random_image(256, 256, 5);
    write_png(t / "in.png", img);

    auto r = wdnet_cli("decompose --input " + (t / "in.png") + " --level 2 --out " + (t / "bands"));
    REQUIRE(r.rc == 0);
    int pngs = 0, raws = 0;
    for (const auto& e : fs::directory_iterator(t.path / "bands")) {
        if (e.path().extension() == ".png") {
            ++pngs;
            auto b = read_png(e.path(), 1);
            CHECK(b.width == 64);
            CHECK(b.height == 64);
        }
        raws += e.path().extension() == ".f32";
    }
    CHECK(pngs == 48);
    CHECK(raws == 48);

    r = wdnet_cli("reconstruct --in " + (t / "bands") + " --out " + (t / "out.png"));
    REQUIRE(r.rc == 0);
    auto back = read_png(t / "out.png");
    REQUIRE(back.same_size(img));
    int worst = 0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) worst = std::max(worst, std::abs(int(back.pixels[i]) - int(img.pixels[i])));
    CHECK(worst <= 1);

    fs::remove(t.path / "bands" / "band_017.f32");
    r = wdnet_cli("reconstruct --in " + (t / "bands") + " --out " + (t / "out2.png"));
    CHECK(r.rc == 1);
    CHECK(r.out.find("band_017.f32") != std::string::npos);
    CHECK(count_lines(r.out) == 1);

    r = wdnet_cli("decompose --input " + (t / "in.png") + " --level 4 --out " + (t / "b4"));
    CHECK(r.rc == 2);
    CHECK_FALSE(fs::exists(t.path / "b4"));
}

TEST_CASE("synth") {
    TempDir t("synth");
    std::ofstream(t / "s.cfg") << "synth.width=64\nsynth.height=64\n";

    auto r = wdnet_cli("synth --count 0 --out " + (t / "empty"));
    CHECK(r.rc == 0);
    CHECK(fs::is_directory(t.path / "empty"));
    CHECK(load_dataset(t.path / "empty").empty());

    REQUIRE(wdnet_cli("synth --config " + (t / "s.cfg") + " --count 3 --seed 8 --out " + (t / "a")).rc == 0);
    REQUIRE(wdnet_cli("synth --config " + (t / "s.cfg") + " --count 3 --seed 8 --out " + (t / "b")).rc == 0);
    int files = 0;
    for (const auto& e : fs::recursive_directory_iterator(t.path / "a")) {
        if (!e.is_regular_file()) continue;
        ++files;
        CHECK(slurp(e.path()) == slurp(t.path / "b" / fs::relative(e.path(), t.path / "a")));
    }
    CHECK(files == 9);
    auto pairs = load_dataset(t.path / "a");
    REQUIRE(pairs.size() == 3);
    CHECK(pairs[0].clean.width == 64);
}

TEST_CASE("synth of 100 full-size pairs stays within a minute") {
    TempDir t("synth100");
    const auto start = std::chrono::steady_clock::now();
    auto r = wdnet_cli("synth --count 100 --seed 1 --out " + (t / "d"));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(r.rc == 0);
    CHECK(secs < 60.0);
    MESSAGE("synth 100 x 256x256: " << secs << " s");
    CHECK(std::distance(fs::directory_iterator(t.path / "d" / "moire"), fs::directory_iterator{}) == 100);
}

TEST_CASE("train, infer and eval on an identity model") {
    TempDir t("train");
    write_tiny_setup(t);
    REQUIRE(wdnet_cli("synth --config " + (t / "tiny.cfg") + " --count 4 --seed 2 --out " + (t / "data")).rc == 0);

    auto r = wdnet_cli("train --config " + (t / "tiny.cfg") + " --data " + (t / "data") + " --steps 0 --out " + (t / "m.wdnt"));
    REQUIRE(r.rc == 0);
    CHECK(r.out.rfind("step=0 ", 0) == 0);
    CHECK(count_lines(r.out) == 2);
    CHECK(r.out.find("total=") != std::string::npos);
    const auto ck = load_checkpoint(t.path / "m.wdnt");
    CHECK(ck.state.step == 0);
    CHECK(ck.state.adam.t == 0);

    const auto data = load_dataset(t.path / "data");
    r = wdnet_cli("infer --ckpt " + (t / "m.wdnt") + " --input " + (t / "data/moire/00001.png") + " --output " + (t / "o.png"));
    REQUIRE(r.rc == 0);
    auto out = read_png(t / "o.png");
    REQUIRE(out.same_size(data[1].contaminated));
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        REQUIRE(std::abs(int(out.pixels[i]) - int(data[1].contaminated.pixels[i])) <= 1);
    }

    write_png(t / "odd.png", test::random_image(30, 32, 1));
    r = wdnet_cli("infer --ckpt " + (t / "m.wdnt") + " --input " + (t / "odd.png") + " --output " + (t / "x.png"));
    CHECK(r.rc == 1);
    CHECK(r.out.find("crop to 28x32") != std::string::npos);
    CHECK(count_lines(r.out) == 1);

    r = wdnet_cli("eval --ckpt " + (t / "m.wdnt") + " --data " + (t / "data"));
    CHECK(r.rc == 0);
    CHECK(r.out.find("00003") != std::string::npos);
    CHECK(r.out.find("mean") != std::string::npos);

    // A short real run logs every step; resuming with another model shape is refused.
    r = wdnet_cli("train --config " + (t / "tiny.cfg") + " --data " + (t / "data") + " --steps 2 --out " + (t / "m2.wdnt"));
    CHECK(r.rc == 0);
    CHECK(r.out.find("step=1 ") != std::string::npos);
    CHECK(r.out.find("step=2 ") != std::string::npos);
    CHECK(load_checkpoint(t.path / "m2.wdnt").state.step == 2);
    r = wdnet_cli("train --data " + (t / "data") + " --steps 1 --resume " + (t / "m2.wdnt") + " --out " + (t / "m3.wdnt"));
    CHECK(r.rc == 1);
    CHECK(r.out.find("width") != std::string::npos);
    CHECK_FALSE(fs::exists(t.path / "m3.wdnt"));
}

TEST_CASE("eval on already restored images") {
    TempDir t("eval");
    write_tiny_setup(t);
    REQUIRE(wdnet_cli("synth --config " + (t / "tiny.cfg") + " --count 2 --out " + (t / "data")).rc == 0);
    for (const auto& e : fs::directory_iterator(t.path / "data" / "clean")) {
        fs::copy_file(e.path(), t.path / "data" / "moire" / e.path().filename(), fs::copy_options::overwrite_existing);
    }
    REQUIRE(wdnet_cli("train --config " + (t / "tiny.cfg") + " --data " + (t / "data") + " --steps 0 --out " + (t / "m.wdnt")).rc == 0);
    auto r = wdnet_cli("eval --ckpt " + (t / "m.wdnt") + " --data " + (t / "data"));
    CHECK(r.rc == 0);
    CHECK(r.out.find("1.0000") != std::string::npos);
}

TEST_CASE("viz-diff") {
    TempDir t("viz");
    SynthConfig c;
    c.width = c.height = 64;
    auto p = synth_pair(c, 3);
    write_png(t / "a.png", p.contaminated);
    write_png(t / "b.png", p.clean);

    auto r = wdnet_cli("viz-diff --a " + (t / "a.png") + " --b " + (t / "a.png") + " --out " + (t / "same"));
    REQUIRE(r.rc == 0);
    auto grid = read_png(t / "same/grid.png", 1);
    CHECK(std::all_of(grid.pixels.begin(), grid.pixels.end(), [](auto v) { return v == 0; }));
    CHECK(fs::exists(t.path / "same" / "table.txt"));

    r = wdnet_cli("viz-diff --level 1 --a " + (t / "a.png") + " --b " + (t / "b.png") + " --out " + (t / "d"));
    REQUIRE(r.rc == 0);
    CHECK(slurp(t.path / "d" / "table.txt") == r.out);
    auto report = subband_diff_report(p.contaminated, p.clean, WaveletConfig{1});
    CHECK(report.bands.size() == 4);
    CHECK(read_png(t / "d/grid.png", report.grid().channels) == report.grid());

    write_png(t / "small.png", test::random_image(32, 32, 1));
    r = wdnet_cli("viz-diff --a " + (t / "a.png") + " --b " + (t / "small.png") + " --out " + (t / "e"));
    CHECK(r.rc == 1);
    CHECK(r.out.find("size") != std::string::npos);
}
