// Writes the synthetic-shapes dataset used by the tests.
#include "detaug/fixture.hpp"
#include "detaug/palette.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"synthetic-shapes fixture writer", "detaug_fixture"};
  std::string root;
  int count = 8, size = 64;
  std::uint64_t seed = 7;
  app.add_option("root", root)->required();
  app.add_option("--count", count);
  app.add_option("--size", size);
  app.add_option("--seed", seed);
  CLI11_PARSE(app, argc, argv);

  try {
    const auto palette = detaug::ClassPalette::isaid_default();
    detaug::write_synthetic_dataset(root, detaug::Split::Train, count, size, seed, palette);
    palette.save(std::filesystem::path(root) / "palette.json");
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  return 0;
}
