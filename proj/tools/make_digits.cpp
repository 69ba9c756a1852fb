// Generates the procedural digit benchmark used for desk-scale runs.
// Writes either the FSKD binary format or a root/<label>/<id>.png tree.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

#include "fskd/data/png_io.hpp"
#include "fskd/data/synthetic.hpp"

namespace fs = std::filesystem;
using namespace fskd;

int main(int argc, char** argv) {
  CLI::App app{"procedural digit dataset generator"};
  std::size_t count = 10000, size = 32;
  std::uint64_t seed = 1;
  std::string output, format = "fskd";
  DigitStyle style;

  app.add_option("--count", count, "number of samples (balanced over 10 classes)");
  app.add_option("--size", size, "square image size in pixels");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--output", output, "output file (fskd) or directory (png)")->required();
  app.add_option("--format", format, "fskd | png");
  app.add_option("--noise-sigma", style.noise_sigma, "pixel noise standard deviation");
  app.add_option("--stroke-min", style.stroke_min, "minimum stroke width at size 32");
  app.add_option("--stroke-max", style.stroke_max, "maximum stroke width at size 32");
  app.add_option("--distractor-prob", style.distractor_prob, "probability of a distractor line");

  CLI11_PARSE(app, argc, argv);

  try {
    Dataset ds = make_digit_dataset(count, size, seed, style);
    if (format == "fskd") {
      save_dataset_binary(ds, output);
    } else if (format == "png") {
      for (const auto& s : ds.samples) {
        const fs::path dir = fs::path(output) / std::to_string(s.label);
        fs::create_directories(dir);
        write_png((dir / (s.id + ".png")).string(), s.image);
      }
    } else {
      std::cerr << "config error: --format must be fskd or png\n";
      return 2;
    }
    std::cout << "wrote " << ds.size() << " digit samples (" << size << "x" << size << ") to " << output << "\n";
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
