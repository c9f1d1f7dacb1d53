#pragma once

#include "detaug/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace detaug {

// Procedural stand-in for aerial imagery: colored shapes (labelled) on a
// textured, unlabelled background. Fully determined by (size, seed).
PairedSample make_synthetic_sample(const std::string& sample_id, int size, std::uint64_t seed,
                                   const ClassPalette& palette);

std::vector<PairedSample> make_synthetic_dataset(int count, int size, std::uint64_t seed,
                                                 const ClassPalette& palette);

// Writes make_synthetic_dataset(count, size, seed) to <root>/<split>/{images,masks}.
void write_synthetic_dataset(const std::filesystem::path& root, Split split, int count, int size,
                             std::uint64_t seed, const ClassPalette& palette);

}  // namespace detaug
