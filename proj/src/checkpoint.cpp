#include "fedids/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "fedids/bytes.hpp"

namespace fedids {

namespace {
constexpr std::uint8_t kMagic[4] = {'F', 'D', 'N', 'N'};
}

std::vector<std::uint8_t> encode_checkpoint(const DenseNet& net) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(net.hidden_activation()));
  w.u8(static_cast<std::uint8_t>(net.output_activation()));
  w.u32(static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (auto s : net.layer_sizes()) w.u64(s);
  w.u64(net.parameter_count());
  for (double p : net.parameters()) w.f64(p);
  return w.take();
}

DenseNet decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  for (auto m : kMagic) {
    if (r.u8() != m) throw SchemaError("not a model checkpoint (bad magic)");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw SchemaError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto hidden = r.u8();
  const auto output = r.u8();
  if (hidden > 2 || output > 1) throw SchemaError("checkpoint has unknown activation code");
  std::vector<std::size_t> sizes(r.u32());
  for (auto& s : sizes) s = r.u64();
  DenseNet net(sizes, static_cast<HiddenActivation>(hidden), static_cast<OutputActivation>(output));
  if (r.u64() != net.parameter_count()) {
    throw SchemaError("checkpoint parameter count does not match its layer sizes");
  }
  for (double& p : net.parameters()) p = r.f64();
  if (!r.done()) throw SchemaError("trailing bytes after checkpoint");
  return net;
}

void save_checkpoint(const DenseNet& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FilesystemError("cannot write checkpoint " + path.string());
  const auto bytes = encode_checkpoint(net);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FilesystemError("failed writing checkpoint " + path.string());
}

DenseNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FilesystemError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace fedids
