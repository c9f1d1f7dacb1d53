#include "detaug/detail_cache.hpp"

#include "detaug/hashing.hpp"
#include "detaug/image_io.hpp"

#include <fstream>
#include <functional>

namespace detaug {

namespace fs = std::filesystem;

namespace {

using Producer = std::function<RasterImage(const RasterImage&)>;

CacheStats ensure_cache(const fs::path& dir, const std::string& params_hash, std::vector<PairedSample>& samples,
                        std::optional<RasterImage> PairedSample::*slot, const Producer& produce) {
  fs::create_directories(dir);
  const fs::path sidecar = dir / "params.sha256";
  std::string stored;
  if (std::ifstream in(sidecar); in) std::getline(in, stored);
  const bool valid = stored == params_hash;

  CacheStats stats;
  for (auto& sample : samples) {
    const fs::path file = dir / (sample.sample_id + ".png");
    if (valid && fs::exists(file)) {
      RasterImage cached = read_png(file);
      if (cached.same_shape(sample.real)) {
        sample.*slot = std::move(cached);
        ++stats.reused;
        continue;
      }
    }
    RasterImage fresh = produce(sample.real);
    write_png(file, fresh);
    sample.*slot = std::move(fresh);
    ++stats.generated;
  }
  std::ofstream(sidecar) << params_hash << '\n';
  return stats;
}

}  // namespace

CacheStats ensure_cfi_cache(const fs::path& root, Split split, std::vector<PairedSample>& samples,
                            const CannyParams& params) {
  params.validate();
  return ensure_cache(root / std::string(to_string(split)) / "cfi", sha256_hex(params.canonical()), samples,
                      &PairedSample::cfi, [&](const RasterImage& img) { return make_cfi(img, params); });
}

CacheStats ensure_sfi_cache(const fs::path& root, Split split, std::vector<PairedSample>& samples,
                            const SegmentationParams& params) {
  params.validate();
  return ensure_cache(root / std::string(to_string(split)) / "sfi", sha256_hex(params.canonical()), samples,
                      &PairedSample::sfi, [&](const RasterImage& img) { return make_sfi(img, params); });
}

}  // namespace detaug
