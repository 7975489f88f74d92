#include "cbmrul/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cbmrul::model {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'B', 'M', 'R', 'U', 'L', 'C', 'K'};

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw InputError("checkpoint truncated");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

struct NamedTensor {
  std::string name;
  net::Shape shape;
  const std::vector<double>* data;
};

}  // namespace

std::string serialize_checkpoint(const Model& model) {
  const ModelConfig& c = model.config();
  nlohmann::json header;
  header["format"] = "cbmrul-checkpoint";
  header["config"] = {
      {"family", to_string(c.family)},
      {"concepts", c.concepts},
      {"concept_names", c.concept_names},
      {"input_channels", c.input_channels},
      {"window", c.window},
      {"latent_dim", c.latent_dim},
      {"embed_dim", c.embed_dim},
      {"extra_capacity", c.extra_capacity},
      {"lambda", c.lambda},
      {"randint_prob", c.randint_prob},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"lr", c.lr},
      {"seed", c.seed},
  };
  header["scaler_mode"] = data::to_string(model.scaler.mode);
  header["optimizer_steps"] = model.parameters().step_count();

  std::vector<NamedTensor> tensors;
  for (const auto& p : model.parameters()) {
    tensors.push_back({p.name, p.value.shape(), &p.value.storage()});
  }
  const auto& s = model.scaler;
  tensors.push_back({"scaler.mean", {s.mean.size()}, &s.mean});
  tensors.push_back({"scaler.stddev", {s.stddev.size()}, &s.stddev});
  tensors.push_back({"scaler.min", {s.min.size()}, &s.min});
  tensors.push_back({"scaler.max", {s.max.size()}, &s.max});
  tensors.push_back({"loss_history", {model.loss_history.size()}, &model.loss_history});

  nlohmann::json index = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    index.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.data->size();
  }
  header["tensors"] = index;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + offset * sizeof(double));
  for (const auto& t : tensors) {
    out.append(reinterpret_cast<const char*>(t.data->data()), t.data->size() * sizeof(double));
  }
  return out;
}

Model deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw InputError("not a checkpoint file (bad magic)");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = take<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw InputError("checkpoint truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint header: ") + e.what());
  }
  pos += header_len;
  const std::size_t payload = pos;

  ModelConfig c;
  try {
    const auto& j = header.at("config");
    c.family = parse_family(j.at("family").get<std::string>());
    c.concepts = j.at("concepts").get<std::size_t>();
    c.concept_names = j.at("concept_names").get<std::vector<std::string>>();
    c.input_channels = j.at("input_channels").get<std::size_t>();
    c.window = j.at("window").get<std::size_t>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.extra_capacity = j.at("extra_capacity").get<long>();
    c.lambda = j.at("lambda").get<double>();
    c.randint_prob = j.at("randint_prob").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint config: ") + e.what());
  }

  Model model(c);
  model.parameters().set_step_count(header.value("optimizer_steps", std::uint64_t{0}));
  model.scaler.mode = data::parse_scaling(header.at("scaler_mode").get<std::string>());

  auto read = [&](std::size_t offset, std::size_t count) {
    const std::size_t begin = payload + offset * sizeof(double);
    if (begin + count * sizeof(double) > bytes.size()) throw InputError("checkpoint truncated");
    std::vector<double> v(count);
    std::memcpy(v.data(), bytes.data() + begin, count * sizeof(double));
    return v;
  };
  std::size_t seen_params = 0;
  for (const auto& t : header.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<net::Shape>();
    auto values = read(t.at("offset").get<std::size_t>(), net::shape_size(shape));
    if (name == "scaler.mean") {
      model.scaler.mean = std::move(values);
    } else if (name == "scaler.stddev") {
      model.scaler.stddev = std::move(values);
    } else if (name == "scaler.min") {
      model.scaler.min = std::move(values);
    } else if (name == "scaler.max") {
      model.scaler.max = std::move(values);
    } else if (name == "loss_history") {
      model.loss_history = std::move(values);
    } else {
      auto& p = model.parameters().get(name);
      if (p.value.shape() != shape) {
        throw InputError("checkpoint tensor " + name + " has shape " + net::shape_string(shape) +
                         ", model expects " + net::shape_string(p.value.shape()));
      }
      p.value = net::Tensor(shape, std::move(values));
      ++seen_params;
    }
  }
  if (seen_params != model.parameters().size()) {
    throw InputError("checkpoint is missing parameters");
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  const std::string bytes = serialize_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace cbmrul::model
