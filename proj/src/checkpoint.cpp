#include "soup/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace soup {
namespace {

constexpr char kMagic[8] = {'S', 'O', 'U', 'P', 'C', 'K', 'P', 'T'};
static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

std::uint64_t fnv1a(const std::vector<char>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void doubles(std::span<const double> xs) {
    pod<std::uint64_t>(xs.size());
    const auto* p = reinterpret_cast<const char*>(xs.data());
    buf_.insert(buf_.end(), p, p + xs.size_bytes());
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<char>& buf) : buf_(buf) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    const auto n = pod<std::uint64_t>();
    if (n > buf_.size() / sizeof(double)) fail();
    need(n * sizeof(double));
    std::vector<double> xs(n);
    std::memcpy(xs.data(), buf_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return xs;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > buf_.size() - pos_) fail();
  }
  [[noreturn]] static void fail() {
    throw CheckpointError(CheckpointError::Kind::corruption, "checkpoint payload is truncated");
  }
  const std::vector<char>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.pod<std::int64_t>(ckpt.global_step);
  for (int v : {ckpt.arch.window, ckpt.arch.embed_dim, ckpt.arch.hidden_dim, ckpt.arch.vocab_size,
                static_cast<int>(ckpt.arch.bos_token), static_cast<int>(ckpt.arch.pad_token)}) {
    w.pod<std::int32_t>(v);
  }
  w.pod<std::uint64_t>(ckpt.vocab.symbols.size());
  for (const auto& s : ckpt.vocab.symbols) w.str(s);
  for (TokenId id : {ckpt.vocab.bos, ckpt.vocab.eos, ckpt.vocab.pad, ckpt.vocab.sep}) {
    w.pod<std::int32_t>(id);
  }
  const auto& segs = ckpt.params.layout().segments();
  w.pod<std::uint64_t>(segs.size());
  for (const auto& s : segs) {
    w.str(s.name);
    w.pod<std::uint64_t>(s.offset);
    w.pod<std::uint64_t>(s.shape.size());
    for (auto d : s.shape) w.pod<std::uint64_t>(d);
  }
  w.doubles(ckpt.params.values());
  w.pod<std::int64_t>(ckpt.optimizer.step_count);
  w.doubles(ckpt.optimizer.first_moment);
  w.doubles(ckpt.optimizer.second_moment);

  const auto& payload = w.bytes();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw CheckpointError(CheckpointError::Kind::io, "cannot open " + tmp + " for writing");
    }
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t size = payload.size();
    const std::uint64_t sum = fnv1a(payload);
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&size), sizeof(size));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw CheckpointError(CheckpointError::Kind::io,
                          "cannot move checkpoint into place at " + path.string() + ": " +
                              ec.message());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t size = 0;
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(CheckpointError::Kind::corruption,
                          path.string() + " is not a checkpoint (bad magic)");
  }
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in) throw CheckpointError(CheckpointError::Kind::corruption, "truncated header");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::version,
                          "checkpoint format version " + std::to_string(version) +
                              " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  }
  in.read(reinterpret_cast<char*>(&size), sizeof(size));
  const auto file_size = std::filesystem::file_size(path);
  if (!in || size > file_size) {
    throw CheckpointError(CheckpointError::Kind::corruption, "truncated header");
  }
  std::vector<char> payload(size);
  std::uint64_t stored_sum = 0;
  in.read(payload.data(), static_cast<std::streamsize>(size));
  in.read(reinterpret_cast<char*>(&stored_sum), sizeof(stored_sum));
  if (!in) throw CheckpointError(CheckpointError::Kind::corruption, "truncated payload");
  if (fnv1a(payload) != stored_sum) {
    throw CheckpointError(CheckpointError::Kind::corruption,
                          "checksum mismatch in " + path.string());
  }

  Reader r(payload);
  Checkpoint ck;
  ck.global_step = r.pod<std::int64_t>();
  ck.arch.window = r.pod<std::int32_t>();
  ck.arch.embed_dim = r.pod<std::int32_t>();
  ck.arch.hidden_dim = r.pod<std::int32_t>();
  ck.arch.vocab_size = r.pod<std::int32_t>();
  ck.arch.bos_token = r.pod<std::int32_t>();
  ck.arch.pad_token = r.pod<std::int32_t>();
  const auto nsym = r.pod<std::uint64_t>();
  if (nsym > payload.size()) throw CheckpointError(CheckpointError::Kind::corruption, "bad vocabulary");
  for (std::uint64_t i = 0; i < nsym; ++i) ck.vocab.symbols.push_back(r.str());
  ck.vocab.bos = r.pod<std::int32_t>();
  ck.vocab.eos = r.pod<std::int32_t>();
  ck.vocab.pad = r.pod<std::int32_t>();
  ck.vocab.sep = r.pod<std::int32_t>();
  const auto nseg = r.pod<std::uint64_t>();
  if (nseg > payload.size()) throw CheckpointError(CheckpointError::Kind::corruption, "bad layout");
  std::vector<Segment> segs;
  for (std::uint64_t i = 0; i < nseg; ++i) {
    Segment s;
    s.name = r.str();
    s.offset = r.pod<std::uint64_t>();
    const auto nd = r.pod<std::uint64_t>();
    if (nd > 8) throw CheckpointError(CheckpointError::Kind::corruption, "bad segment rank");
    for (std::uint64_t d = 0; d < nd; ++d) s.shape.push_back(r.pod<std::uint64_t>());
    segs.push_back(std::move(s));
  }
  auto values = r.doubles();
  ck.optimizer.step_count = r.pod<std::int64_t>();
  ck.optimizer.first_moment = r.doubles();
  ck.optimizer.second_moment = r.doubles();
  if (!r.done()) {
    throw CheckpointError(CheckpointError::Kind::corruption, "trailing bytes in payload");
  }
  try {
    ck.vocab.validate();
    ck.arch.validate();
    auto layout = std::make_shared<const ParamLayout>(std::move(segs));
    if (!(*layout == *make_layout(ck.arch))) {
      throw std::invalid_argument("parameter layout does not match architecture");
    }
    ck.params = ParamVector(std::move(layout), std::move(values));
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointError::Kind::corruption,
                          std::string("inconsistent checkpoint: ") + e.what());
  }
  if (ck.optimizer.first_moment.size() != ck.params.size() ||
      ck.optimizer.second_moment.size() != ck.params.size()) {
    throw CheckpointError(CheckpointError::Kind::corruption, "optimizer state size mismatch");
  }
  return ck;
}

}  // namespace soup
