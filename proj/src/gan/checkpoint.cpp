#include "detaug/error.hpp"
#include "detaug/gan.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>

namespace detaug {

namespace {

constexpr char kMagic[8] = {'D', 'E', 'T', 'A', 'U', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) fail(ErrorCode::ParseError, "truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

nlohmann::json describe(const std::vector<const nn::Parameter*>& params) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto* p : params) {
    list.push_back({{"name", p->name}, {"shape", {p->value.n, p->value.c, p->value.h, p->value.w}}});
  }
  return list;
}

void check_layout(const nlohmann::json& stored, const std::vector<nn::Parameter*>& params, const char* which) {
  if (stored.size() != params.size()) fail(ErrorCode::ParseError, std::string(which) + " parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i]->value;
    const std::vector<int> shape = stored[i].at("shape").get<std::vector<int>>();
    if (stored[i].at("name").get<std::string>() != params[i]->name || shape != std::vector<int>{p.n, p.c, p.h, p.w}) {
      fail(ErrorCode::ParseError, std::string(which) + " parameter layout mismatch at " + params[i]->name);
    }
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& model) {
  const auto g_params = model.generator.parameters();
  const auto d_params = model.discriminator.parameters();
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : model.loss_history) history.push_back({r.d_loss, r.g_adv, r.g_l1});
  const nlohmann::json header = {
      {"format", "detaug-checkpoint"},
      {"version", kVersion},
      {"generator_config", to_json(model.generator_config)},
      {"discriminator_config", to_json(model.discriminator_config)},
      {"training_config", to_json(model.training_config)},
      {"seed", model.training_config.seed},
      {"steps_run", model.steps_run},
      {"loss_history", history},
      {"generator_tensors", describe(g_params)},
      {"discriminator_tensors", describe(d_params)},
  };
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_u64(out, kVersion);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* list : {&g_params, &d_params}) {
    for (const auto* p : *list) {
      for (double v : p->value.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  if (!out) fail(ErrorCode::IoError, "failed writing checkpoint " + path.string());
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    fail(ErrorCode::ParseError, path.string() + " is not a checkpoint");
  }
  if (get_u64(in) != kVersion) fail(ErrorCode::ParseError, "unsupported checkpoint version");
  const std::uint64_t len = get_u64(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) fail(ErrorCode::ParseError, "truncated checkpoint header");

  TrainedModel model;
  try {
    const auto header = nlohmann::json::parse(text);
    model.generator_config = generator_config_from_json(header.at("generator_config"));
    model.discriminator_config = discriminator_config_from_json(header.at("discriminator_config"));
    model.training_config = training_config_from_json(header.at("training_config"));
    model.steps_run = header.at("steps_run").get<int>();
    for (const auto& r : header.at("loss_history")) {
      model.loss_history.push_back({r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()});
    }
    model.generator = UNetGenerator(model.generator_config);
    model.discriminator = PatchDiscriminator(model.discriminator_config);
    check_layout(header.at("generator_tensors"), model.generator.parameters(), "generator");
    check_layout(header.at("discriminator_tensors"), model.discriminator.parameters(), "discriminator");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  for (auto list : {model.generator.parameters(), model.discriminator.parameters()}) {
    for (auto* p : list) {
      for (double& v : p->value.data) v = std::bit_cast<double>(get_u64(in));
      p->grad = nn::Tensor(p->value.n, p->value.c, p->value.h, p->value.w);
    }
  }
  return model;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << "step,d_loss,g_adv,g_l1\n" << std::setprecision(17);
  for (std::size_t i = 0; i < history.size(); ++i) {
    out << i << ',' << history[i].d_loss << ',' << history[i].g_adv << ',' << history[i].g_l1 << '\n';
  }
}

}  // namespace detaug
