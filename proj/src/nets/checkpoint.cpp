#include "cephlm/nets/checkpoint.hpp"

#include <cstring>
#include <json.hpp>

#include "cephlm/binary_io.hpp"
#include "cephlm/error.hpp"
#include "cephlm/sha256.hpp"

namespace cephlm::nets {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'E', 'P', 'H', 'L', 'M', 'C', 'K'};
constexpr std::size_t kDigestChars = 64;

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

json arch_json(const ModelArch& a) {
  return {{"kind", std::string(kind_name(a.kind))}, {"conv_channels", a.conv_channels}, {"kernel", a.kernel},
          {"fc_width", a.fc_width},                 {"num_classes", a.num_classes},     {"input_size", a.input_size}};
}

ModelArch arch_from_json(const json& j) {
  ModelArch a;
  a.kind = parse_kind(j.at("kind").get<std::string>());
  a.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
  a.kernel = j.at("kernel").get<std::size_t>();
  a.fc_width = j.at("fc_width").get<std::size_t>();
  a.num_classes = j.at("num_classes").get<std::size_t>();
  a.input_size = j.at("input_size").get<std::size_t>();
  return a;
}

}  // namespace

template <typename T>
void save_checkpoint(const Model<T>& model, const CheckpointMeta& meta, const std::filesystem::path& path) {
  json header;
  header["arch"] = arch_json(model.arch());
  header["dtype"] = dtype_name<T>();
  json shapes = json::array();
  for (const auto& p : model.params()) shapes.push_back(p.shape());
  header["shapes"] = shapes;
  header["labels"] = meta.labels;
  header["seed"] = meta.seed;
  header["best_epoch"] = meta.best_epoch;
  json hist = json::array();
  for (const auto& e : meta.history.epochs) {
    hist.push_back({e.epoch, e.train_loss, e.val_loss, std::isnan(e.val_acc) ? json(nullptr) : json(e.val_acc)});
  }
  header["history"] = hist;
  const std::string text = header.dump();

  ByteWriter w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text.data(), text.size());
  for (const auto& p : model.params())
    for (T v : p.data()) w.put<T>(v);
  const std::string digest = sha256_hex(w.bytes());
  w.put_bytes(digest.data(), digest.size());
  write_file_bytes(path, w.bytes());
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta, const ModelArch* expected) {
  if (!std::filesystem::exists(path)) throw Error(Errc::missing_file, path.string());
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < sizeof(kMagic) + 8 + kDigestChars || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(Errc::corrupt_file, "not a checkpoint: " + path.string());
  }
  ByteReader r(bytes);
  r.get_bytes(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(Errc::version_mismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                            std::to_string(kCheckpointVersion));
  }
  const std::size_t body = bytes.size() - kDigestChars;
  const std::string stored(reinterpret_cast<const char*>(bytes.data() + body), kDigestChars);
  if (sha256_hex(std::span<const std::byte>(bytes.data(), body)) != stored) {
    throw Error(Errc::corrupt_file, "checkpoint checksum mismatch: " + path.string());
  }

  const auto header_len = r.get<std::uint32_t>();
  const auto header_bytes = r.get_bytes(header_len);
  json header;
  ModelArch arch;
  try {
    header = json::parse(std::string(reinterpret_cast<const char*>(header_bytes.data()), header_bytes.size()));
    arch = arch_from_json(header.at("arch"));
    if (header.at("dtype").get<std::string>() != dtype_name<T>()) {
      throw Error(Errc::arch_mismatch, "checkpoint holds " + header["dtype"].get<std::string>() + " weights, expected " +
                                           dtype_name<T>());
    }
  } catch (const json::exception& e) {
    throw Error(Errc::corrupt_file, std::string("checkpoint header: ") + e.what());
  }
  if (expected && !(*expected == arch)) {
    throw Error(Errc::arch_mismatch, "checkpoint architecture " + arch_json(arch).dump() + " differs from expected " +
                                         arch_json(*expected).dump());
  }

  std::vector<Tensor<T>> params;
  for (const auto& s : header.at("shapes")) {
    Tensor<T> t(s.get<numcore::Shape>());
    for (T& v : t.data()) v = r.get<T>();
    t.set_requires_grad(true);
    params.push_back(std::move(t));
  }
  if (r.remaining() != kDigestChars) throw Error(Errc::corrupt_file, "checkpoint has trailing data");
  Model<T> model(arch, std::move(params));

  if (meta) {
    meta->labels = header.at("labels").get<std::vector<std::string>>();
    meta->seed = header.at("seed").get<std::uint64_t>();
    meta->best_epoch = header.at("best_epoch").get<std::size_t>();
    meta->history.epochs.clear();
    for (const auto& e : header.at("history")) {
      meta->history.epochs.push_back({e[0].get<std::size_t>(), e[1].get<double>(), e[2].get<double>(),
                                      e[3].is_null() ? std::nan("") : e[3].get<double>()});
    }
  }
  return model;
}

template void save_checkpoint<float>(const Model<float>&, const CheckpointMeta&, const std::filesystem::path&);
template void save_checkpoint<double>(const Model<double>&, const CheckpointMeta&, const std::filesystem::path&);
template Model<float> load_checkpoint<float>(const std::filesystem::path&, CheckpointMeta*, const ModelArch*);
template Model<double> load_checkpoint<double>(const std::filesystem::path&, CheckpointMeta*, const ModelArch*);

}  // namespace cephlm::nets
