#include "ceqa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace ceqa {

namespace nn {

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoFfn: return "no_ffn";
    case Ablation::RandomConstraints: return "random_constraints";
    case Ablation::NoMemory: return "no_memory";
  }
  return {};
}

Ablation parse_ablation(std::string_view s) {
  for (auto a : {Ablation::None, Ablation::NoFfn, Ablation::RandomConstraints, Ablation::NoMemory})
    if (ablation_name(a) == s) return a;
  throw Error("unknown ablation '" + std::string(s) + "'");
}

}  // namespace nn

namespace {

constexpr char kMagic[8] = {'C', 'E', 'Q', 'A', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void integer(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
  }
  void real(double v) { integer(std::bit_cast<std::uint64_t>(v)); }
  void text(const std::string& s) {
    integer(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  template <typename T>
  T integer() {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      int c = in_.get();
      if (c == EOF) throw Error("checkpoint truncated");
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return static_cast<T>(v);
  }
  double real() { return std::bit_cast<double>(integer<std::uint64_t>()); }
  std::string text() {
    auto n = integer<std::uint32_t>();
    if (n > (1U << 20)) throw Error("checkpoint string too long");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) throw Error("checkpoint truncated");
    return s;
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  Writer w(out);
  out.write(kMagic, sizeof kMagic);
  w.integer(kCheckpointVersion);
  w.integer(static_cast<std::uint64_t>(ckpt.params.dim()));
  w.integer(static_cast<std::uint64_t>(ckpt.params.num_vertices()));
  w.integer(static_cast<std::uint64_t>(kNumRelations));
  w.text(ckpt.backbone);
  w.integer(static_cast<std::uint8_t>(ckpt.options.ablation));
  w.integer(static_cast<std::uint8_t>(ckpt.options.softmax_scores));
  w.integer(static_cast<std::uint8_t>(ckpt.options.memory_on_anchors));
  std::uint32_t blocks = 0;
  ckpt.params.for_each_block([&](const std::string&, auto) { ++blocks; });
  w.integer(blocks);
  ckpt.params.for_each_block([&](const std::string& name, auto m) {
    w.text(name);
    w.integer(static_cast<std::uint64_t>(m.rows()));
    w.integer(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) w.real(m.data()[i]);
  });
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw Error("not a checkpoint file");
  Reader r(in);
  if (auto v = r.integer<std::uint32_t>(); v != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + std::to_string(v));
  auto dim = r.integer<std::uint64_t>();
  auto vertices = r.integer<std::uint64_t>();
  auto relations = r.integer<std::uint64_t>();
  if (relations != kNumRelations) throw Error("checkpoint relation count mismatch");
  if (dim == 0 || dim > 1'000'000 || vertices > 100'000'000) throw Error("checkpoint shape out of range");

  Checkpoint ckpt;
  ckpt.backbone = r.text();
  if (ckpt.backbone != "gqe") throw Error("unsupported backbone '" + ckpt.backbone + "'");
  auto ablation = r.integer<std::uint8_t>();
  if (ablation > 3) throw Error("bad ablation flag in checkpoint");
  ckpt.options.ablation = static_cast<nn::Ablation>(ablation);
  ckpt.options.softmax_scores = r.integer<std::uint8_t>() != 0;
  ckpt.options.memory_on_anchors = r.integer<std::uint8_t>() != 0;

  ckpt.params = nn::ModelParams<double>::zeros(static_cast<Eigen::Index>(vertices), static_cast<Eigen::Index>(dim));
  std::map<std::string, Eigen::Map<nn::Matrix<double>>> blocks;
  ckpt.params.for_each_block([&](const std::string& name, Eigen::Map<nn::Matrix<double>> m) { blocks.emplace(name, m); });
  auto count = r.integer<std::uint32_t>();
  if (count != blocks.size()) throw Error("checkpoint block count mismatch");
  for (std::uint32_t b = 0; b < count; ++b) {
    auto name = r.text();
    auto it = blocks.find(name);
    if (it == blocks.end()) throw Error("unknown checkpoint block '" + name + "'");
    auto rows = r.integer<std::uint64_t>();
    auto cols = r.integer<std::uint64_t>();
    auto& m = it->second;
    if (rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols()))
      throw Error("checkpoint block '" + name + "' has mismatched shape");
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.real();
  }
  return ckpt;
}

}  // namespace ceqa
