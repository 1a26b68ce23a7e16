#include "zsasr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace zsasr {

namespace {

class Writer {
 public:
  explicit Writer(const std::filesystem::path& p) : os_(p, std::ios::binary) {
    if (!os_) throw std::runtime_error("cannot open checkpoint for writing: " + p.string());
  }
  template <class T>
  void pod(const T& v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    os_.write(s.data(), std::streamsize(s.size()));
  }
  void vec(const std::vector<double>& v) {
    pod<std::uint64_t>(v.size());
    os_.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
  }
  void finish() {
    os_.flush();
    if (!os_) throw std::runtime_error("checkpoint write failed");
  }

 private:
  std::ofstream os_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& p) : is_(p, std::ios::binary) {
    if (!is_) throw std::runtime_error("cannot open checkpoint: " + p.string());
  }
  template <class T>
  T pod() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    guard(n);
    std::string s(n, '\0');
    is_.read(s.data(), std::streamsize(n));
    check();
    return s;
  }
  std::vector<double> vec() {
    const auto n = pod<std::uint64_t>();
    guard(n * sizeof(double));
    std::vector<double> v(n);
    is_.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(double)));
    check();
    return v;
  }

 private:
  void check() {
    if (!is_) throw std::runtime_error("truncated checkpoint");
  }
  void guard(std::uint64_t bytes) {
    if (bytes > (std::uint64_t(1) << 34)) throw std::runtime_error("corrupt checkpoint length");
  }
  std::ifstream is_;
};

}  // namespace

Checkpoint make_checkpoint(const ParamStore& params, const OptimState& optim, const EmaState& ema,
                           std::uint64_t seed, std::uint64_t step, std::string meta) {
  Checkpoint ck;
  ck.seed = seed;
  ck.step = step;
  ck.meta = std::move(meta);
  ck.names = params.names();
  for (const auto& t : params.tensors()) ck.shapes.push_back(t.shape());
  ck.values = params.snapshot();
  ck.optim = optim;
  ck.ema = ema;
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  Writer w(path);
  w.pod<char>('Z');
  w.pod<char>('S');
  w.pod<char>('C');
  w.pod<char>('K');
  w.pod<std::uint32_t>(Checkpoint::kVersion);
  w.pod<std::uint64_t>(ck.seed);
  w.pod<std::uint64_t>(ck.step);
  w.str(ck.meta);
  w.pod<std::uint64_t>(ck.names.size());
  for (std::size_t i = 0; i < ck.names.size(); ++i) {
    w.str(ck.names[i]);
    w.pod<std::uint32_t>(std::uint32_t(ck.shapes[i].size()));
    for (auto d : ck.shapes[i]) w.pod<std::uint64_t>(d);
    w.vec(ck.values[i]);
  }
  const auto& c = ck.optim.cfg;
  w.pod(c.peak_lr);
  w.pod<std::uint64_t>(c.warmup_steps);
  w.pod(c.beta1);
  w.pod(c.beta2);
  w.pod(c.eps);
  w.pod(c.clip_norm);
  w.pod<std::uint64_t>(ck.optim.step);
  w.pod<std::uint64_t>(ck.optim.skipped);
  w.pod<std::uint64_t>(ck.optim.m.size());
  for (std::size_t i = 0; i < ck.optim.m.size(); ++i) {
    w.vec(ck.optim.m[i]);
    w.vec(ck.optim.v[i]);
  }
  w.pod(ck.ema.decay);
  w.pod<std::uint64_t>(ck.ema.shadow.size());
  for (const auto& s : ck.ema.shadow) w.vec(s);
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  for (auto& ch : magic) ch = r.pod<char>();
  if (std::memcmp(magic, "ZSCK", 4) != 0) throw std::runtime_error("not a checkpoint: " + path.string());
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.seed = r.pod<std::uint64_t>();
  ck.step = r.pod<std::uint64_t>();
  ck.meta = r.str();
  const auto n = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    ck.names.push_back(r.str());
    const auto nd = r.pod<std::uint32_t>();
    Shape s;
    for (std::uint32_t d = 0; d < nd; ++d) s.push_back(std::size_t(r.pod<std::uint64_t>()));
    ck.shapes.push_back(s);
    ck.values.push_back(r.vec());
    if (ck.values.back().size() != shape_numel(s)) throw std::runtime_error("checkpoint shape/payload mismatch");
  }
  auto& c = ck.optim.cfg;
  c.peak_lr = r.pod<double>();
  c.warmup_steps = r.pod<std::uint64_t>();
  c.beta1 = r.pod<double>();
  c.beta2 = r.pod<double>();
  c.eps = r.pod<double>();
  c.clip_norm = r.pod<double>();
  ck.optim.step = r.pod<std::uint64_t>();
  ck.optim.skipped = r.pod<std::uint64_t>();
  const auto nm = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < nm; ++i) {
    ck.optim.m.push_back(r.vec());
    ck.optim.v.push_back(r.vec());
  }
  ck.ema.decay = r.pod<double>();
  const auto ns = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < ns; ++i) ck.ema.shadow.push_back(r.vec());
  return ck;
}

void restore_params(const Checkpoint& ck, ParamStore& params) {
  if (ck.names != params.names()) throw std::runtime_error("checkpoint parameter names do not match model");
  for (std::size_t i = 0; i < ck.names.size(); ++i) {
    if (ck.shapes[i] != params.tensors()[i].shape()) {
      throw std::runtime_error("checkpoint shape mismatch for " + ck.names[i] + ": " +
                               shape_str(ck.shapes[i]) + " vs " +
                               shape_str(params.tensors()[i].shape()));
    }
  }
  params.load(ck.values);
}

}  // namespace zsasr
