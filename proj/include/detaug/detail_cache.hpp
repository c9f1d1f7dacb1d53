#pragma once

#include "detaug/dataset.hpp"
#include "detaug/preprocess.hpp"

#include <filesystem>

namespace detaug {

struct CacheStats {
  int generated = 0;
  int reused = 0;
};

// CFI/SFI PNG caches under <root>/<split>/{cfi,sfi}/<id>.png. A sidecar
// `params.sha256` records the parameter hash; a mismatch regenerates every
// entry. Fills sample.cfi / sample.sfi.
CacheStats ensure_cfi_cache(const std::filesystem::path& root, Split split, std::vector<PairedSample>& samples,
                            const CannyParams& params);
CacheStats ensure_sfi_cache(const std::filesystem::path& root, Split split, std::vector<PairedSample>& samples,
                            const SegmentationParams& params);

}  // namespace detaug
