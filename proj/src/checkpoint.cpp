// SPDX-License-Identifier: Apache-2.0
#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "config.hpp"
#include "error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace neurotrails {

namespace {

constexpr char magic[8] = {'N', 'T', 'C', 'K', 'P', 'T', '\0', '\0'};

// Section tags, in file order.
constexpr const char *section_order[] = {"STAT", "PARM", "MASK", "OPTS",
                                         "RNGS", "END "};

class Writer {
public:
  template <class T> void put(T v) {
    const char *p = reinterpret_cast<const char *>(&v);
    buf_.append(p, sizeof(T));
  }
  void put_bytes(const void *p, std::size_t n) {
    buf_.append(static_cast<const char *>(p), n);
  }
  void put_string(const std::string &s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void put_tensor(const std::string &name, const Tensor &t) {
    put_string(name);
    put<std::uint32_t>(static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape())
      put<std::uint64_t>(d);
    put_bytes(t.vec().data(), t.size() * sizeof(float));
  }
  std::string &str() { return buf_; }

private:
  std::string buf_;
};

class Reader {
public:
  Reader(const std::string &buf, std::string what)
      : buf_(buf), what_(std::move(what)) {}

  template <class T> T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor get_tensor(std::string &name) {
    name = get_string();
    const auto rank = get<std::uint32_t>();
    if (rank > 8)
      fail_io(what_ + ": tensor " + name + " has implausible rank " +
              std::to_string(rank));
    Shape shape(rank);
    for (auto &d : shape)
      d = get<std::uint64_t>();
    const std::size_t n = shape_size(shape);
    need(n * sizeof(float));
    Tensor t(shape);
    std::memcpy(t.vec().data(), buf_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
    return t;
  }
  const char *take(std::size_t n) {
    need(n);
    const char *p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == buf_.size(); }

private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n)
      fail_io(what_ + ": payload ends early");
  }
  const std::string &buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string layer_name(const TrailsModel &m, std::size_t component,
                       std::size_t layer) {
  return m.component_name(component) + "/L" + std::to_string(layer);
}

std::string stat_payload(const TrainState &state) {
  Writer w;
  w.put<double>(state.train_flops);
  w.put<std::uint8_t>(state.pruned ? 1 : 0);
  w.put<double>(state.loss_sum);
  w.put<std::uint64_t>(state.loss_count);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(state.members.size()));
  for (const auto &ms : state.members) {
    w.put<std::uint64_t>(ms.model.backbone_forwards);
    w.put<std::uint64_t>(ms.model.head_forwards);
  }
  return std::move(w.str());
}

std::string parm_payload(const TrainState &state) {
  Writer w;
  std::uint32_t count = 0;
  Writer body;
  for (const auto &ms : state.members) {
    const auto comps = ms.model.components();
    for (std::size_t c = 0; c < comps.size(); ++c) {
      const auto &layers = comps[c]->layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        if (!layers[l].spec.maskable())
          continue;
        const std::string base = layer_name(ms.model, c, l);
        body.put_tensor(base + ".weight", layers[l].weight.values);
        body.put_tensor(base + ".bias", layers[l].bias);
        count += 2;
      }
    }
  }
  w.put<std::uint32_t>(count);
  w.str() += body.str();
  return std::move(w.str());
}

std::string mask_payload(const TrainState &state) {
  Writer body;
  std::uint32_t count = 0;
  for (const auto &ms : state.members) {
    const auto comps = ms.model.components();
    for (std::size_t c = 0; c < comps.size(); ++c) {
      const auto &layers = comps[c]->layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        if (!layers[l].spec.maskable())
          continue;
        const Mask &m = layers[l].weight.mask;
        body.put_string(layer_name(ms.model, c, l) + ".mask");
        body.put<std::uint64_t>(m.size());
        std::string bits((m.size() + 7) / 8, '\0');
        for (std::size_t i = 0; i < m.size(); ++i)
          if (m[i])
            bits[i / 8] = static_cast<char>(bits[i / 8] | (1u << (i % 8)));
        body.put_bytes(bits.data(), bits.size());
        ++count;
      }
    }
  }
  Writer w;
  w.put<std::uint32_t>(count);
  w.str() += body.str();
  return std::move(w.str());
}

std::string opts_payload(const TrainState &state) {
  Writer body;
  std::uint32_t count = 0;
  for (const auto &ms : state.members) {
    const auto comps = ms.model.components();
    for (std::size_t c = 0; c < comps.size(); ++c) {
      const OptimizerState &os = ms.optim[c];
      body.put_string(ms.model.component_name(c));
      body.put<std::uint64_t>(os.steps);
      std::uint32_t n = 0;
      Writer tensors;
      for (std::size_t l = 0; l < os.layers.size(); ++l) {
        const LayerOptState &ls = os.layers[l];
        const std::string base = layer_name(ms.model, c, l);
        const std::pair<const char *, const Tensor *> bufs[] = {
            {".first_w", &ls.first_w},
            {".second_w", &ls.second_w},
            {".first_b", &ls.first_b},
            {".second_b", &ls.second_b}};
        for (const auto &[suffix, t] : bufs) {
          if (t->size() == 0)
            continue;
          tensors.put_tensor(base + suffix, *t);
          ++n;
        }
      }
      body.put<std::uint32_t>(n);
      body.str() += tensors.str();
      ++count;
    }
  }
  Writer w;
  w.put<std::uint32_t>(count);
  w.str() += body.str();
  return std::move(w.str());
}

std::string rngs_payload(const TrainState &state) {
  Writer body;
  std::uint32_t count = 0;
  for (const auto &ms : state.members) {
    for (std::size_t c = 0; c < ms.topology_rng.size(); ++c) {
      body.put_string(ms.model.component_name(c) + ".topology");
      for (auto word : ms.topology_rng[c].state())
        body.put<std::uint64_t>(word);
      ++count;
    }
  }
  Writer w;
  w.put<std::uint32_t>(count);
  w.str() += body.str();
  return std::move(w.str());
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail_io("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CheckpointInfo parse_header(Reader &r, const std::string &what) {
  const char *m = r.take(sizeof magic);
  if (std::memcmp(m, magic, sizeof magic) != 0)
    fail_io(what + ": not a checkpoint (bad magic)");
  CheckpointInfo info;
  info.version = r.get<std::uint32_t>();
  if (info.version != checkpoint_version)
    fail_io(what + ": unsupported format version " +
            std::to_string(info.version) + " (this build reads version " +
            std::to_string(checkpoint_version) + ")");
  info.config_hash = r.get<std::uint64_t>();
  info.step = r.get<std::uint64_t>();
  return info;
}

[[noreturn]] void mismatch(const std::string &what, const std::string &item) {
  fail_validation(what + ": does not match the configured model (" + item + ")");
}

void restore_tensor(Tensor &dst, const Tensor &src, const std::string &what,
                    const std::string &name) {
  if (dst.shape() != src.shape())
    mismatch(what, name + " has shape " + shape_str(src.shape()) + ", expected " +
                       shape_str(dst.shape()));
  dst.vec() = src.vec();
}

} // namespace

void save_checkpoint(const TrainState &state, std::uint64_t config_hash,
                     const std::filesystem::path &path) {
  Writer w;
  w.put_bytes(magic, sizeof magic);
  w.put<std::uint32_t>(checkpoint_version);
  w.put<std::uint64_t>(config_hash);
  w.put<std::uint64_t>(state.step);
  const std::string payloads[] = {stat_payload(state), parm_payload(state),
                                  mask_payload(state), opts_payload(state),
                                  rngs_payload(state), std::string()};
  for (std::size_t s = 0; s < std::size(payloads); ++s) {
    w.put_bytes(section_order[s], 4);
    w.put<std::uint64_t>(payloads[s].size());
    w.put_bytes(payloads[s].data(), payloads[s].size());
    w.put<std::uint64_t>(fnv1a64(payloads[s]));
  }

  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      fail_io("cannot write checkpoint " + tmp.string());
    out.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
    if (!out)
      fail_io("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    fail_io("cannot move checkpoint into place at " + path.string() + ": " +
            ec.message());
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path &path) {
  const std::string buf = read_file(path);
  const std::string what = "checkpoint " + path.string();
  Reader r(buf, what + " header");
  return parse_header(r, what);
}

CheckpointInfo load_checkpoint(const std::filesystem::path &path,
                               TrainState &state, std::uint64_t config_hash,
                               bool force) {
  const std::string buf = read_file(path);
  const std::string what = "checkpoint " + path.string();
  Reader r(buf, what + " header");
  const CheckpointInfo info = parse_header(r, what);
  if (info.config_hash != config_hash && !force) {
    char got[17], want[17];
    std::snprintf(got, sizeof got, "%016llx",
                  static_cast<unsigned long long>(info.config_hash));
    std::snprintf(want, sizeof want, "%016llx",
                  static_cast<unsigned long long>(config_hash));
    fail_validation(what + ": config hash " + got +
                    " does not match the current config " + want +
                    " (use --force to override)");
  }

  // Split into sections, checking order, lengths and checksums first.
  std::map<std::string, std::string> sections;
  for (const char *tag : section_order) {
    if (r.done())
      fail_io(what + ": truncated, section " + std::string(tag, 4) +
              " is missing");
    try {
      const std::string got(r.take(4), 4);
      if (got != std::string(tag, 4))
        fail_io(what + ": expected section " + std::string(tag, 4) +
                ", found '" + got + "'");
      const auto len = r.get<std::uint64_t>();
      std::string payload(r.take(len), len);
      const auto sum = r.get<std::uint64_t>();
      if (sum != fnv1a64(payload))
        fail_io(what + ": checksum mismatch in section " + got +
                " (corrupt payload)");
      sections[got] = std::move(payload);
    } catch (const Error &e) {
      if (std::string(e.what()).find("payload ends early") == std::string::npos)
        throw;
      fail_io(what + ": truncated inside section " + std::string(tag, 4));
    }
  }
  if (!r.done())
    fail_io(what + ": trailing bytes after END section");

  TrainState next = state;
  {
    Reader s(sections["STAT"], what + " section STAT");
    next.train_flops = s.get<double>();
    next.pruned = s.get<std::uint8_t>() != 0;
    next.loss_sum = s.get<double>();
    next.loss_count = s.get<std::uint64_t>();
    const auto members = s.get<std::uint32_t>();
    if (members != next.members.size())
      mismatch(what, std::to_string(members) + " members, expected " +
                         std::to_string(next.members.size()));
    for (auto &ms : next.members) {
      ms.model.backbone_forwards = s.get<std::uint64_t>();
      ms.model.head_forwards = s.get<std::uint64_t>();
    }
  }
  {
    Reader s(sections["PARM"], what + " section PARM");
    std::map<std::string, Tensor> tensors;
    const auto n = s.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
      std::string name;
      Tensor t = s.get_tensor(name);
      tensors.emplace(name, std::move(t));
    }
    std::size_t used = 0;
    for (auto &ms : next.members) {
      auto comps = ms.model.components();
      for (std::size_t c = 0; c < comps.size(); ++c) {
        auto &layers = comps[c]->layers();
        for (std::size_t l = 0; l < layers.size(); ++l) {
          if (!layers[l].spec.maskable())
            continue;
          const std::string base = layer_name(ms.model, c, l);
          for (const char *suffix : {".weight", ".bias"}) {
            auto it = tensors.find(base + suffix);
            if (it == tensors.end())
              mismatch(what, "missing tensor " + base + suffix);
            Tensor &dst = std::string(suffix) == ".weight"
                              ? layers[l].weight.values
                              : layers[l].bias;
            restore_tensor(dst, it->second, what, base + suffix);
            ++used;
          }
        }
      }
    }
    if (used != tensors.size())
      mismatch(what, "extra parameter tensors");
  }
  {
    Reader s(sections["MASK"], what + " section MASK");
    std::map<std::string, Mask> masks;
    const auto n = s.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::string name = s.get_string();
      const auto bits = s.get<std::uint64_t>();
      const char *p = s.take((bits + 7) / 8);
      Mask m(bits);
      for (std::size_t b = 0; b < bits; ++b)
        m[b] = (static_cast<unsigned char>(p[b / 8]) >> (b % 8)) & 1u;
      masks.emplace(name, std::move(m));
    }
    for (auto &ms : next.members) {
      auto comps = ms.model.components();
      for (std::size_t c = 0; c < comps.size(); ++c) {
        auto &layers = comps[c]->layers();
        for (std::size_t l = 0; l < layers.size(); ++l) {
          if (!layers[l].spec.maskable())
            continue;
          const std::string name = layer_name(ms.model, c, l) + ".mask";
          auto it = masks.find(name);
          if (it == masks.end())
            mismatch(what, "missing mask " + name);
          if (it->second.size() != layers[l].weight.mask.size())
            mismatch(what, name + " has the wrong length");
          layers[l].weight.mask = it->second;
          if (!layers[l].weight.consistent())
            fail_io(what + ": " + name +
                    " leaves non-zero values at masked positions");
        }
      }
    }
  }
  {
    Reader s(sections["OPTS"], what + " section OPTS");
    std::map<std::string, std::pair<std::uint64_t, std::map<std::string, Tensor>>>
        states;
    const auto n = s.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::string comp = s.get_string();
      auto &entry = states[comp];
      entry.first = s.get<std::uint64_t>();
      const auto k = s.get<std::uint32_t>();
      for (std::uint32_t j = 0; j < k; ++j) {
        std::string name;
        Tensor t = s.get_tensor(name);
        entry.second.emplace(name, std::move(t));
      }
    }
    for (auto &ms : next.members) {
      for (std::size_t c = 0; c < ms.optim.size(); ++c) {
        const std::string comp = ms.model.component_name(c);
        auto it = states.find(comp);
        if (it == states.end())
          mismatch(what, "missing optimizer state for " + comp);
        OptimizerState &os = ms.optim[c];
        os.steps = it->second.first;
        std::size_t used = 0;
        for (std::size_t l = 0; l < os.layers.size(); ++l) {
          LayerOptState &ls = os.layers[l];
          const std::string base = layer_name(ms.model, c, l);
          const std::pair<const char *, Tensor *> bufs[] = {
              {".first_w", &ls.first_w},
              {".second_w", &ls.second_w},
              {".first_b", &ls.first_b},
              {".second_b", &ls.second_b}};
          for (const auto &[suffix, t] : bufs) {
            if (t->size() == 0)
              continue;
            auto jt = it->second.second.find(base + suffix);
            if (jt == it->second.second.end())
              mismatch(what, "missing optimizer buffer " + base + suffix);
            restore_tensor(*t, jt->second, what, base + suffix);
            ++used;
          }
        }
        if (used != it->second.second.size())
          mismatch(what, "optimizer buffers for " + comp +
                             " do not match the configured optimizer");
      }
    }
  }
  {
    Reader s(sections["RNGS"], what + " section RNGS");
    std::map<std::string, Rng::State> rngs;
    const auto n = s.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::string name = s.get_string();
      Rng::State st;
      for (auto &word : st)
        word = s.get<std::uint64_t>();
      rngs.emplace(name, st);
    }
    for (auto &ms : next.members) {
      for (std::size_t c = 0; c < ms.topology_rng.size(); ++c) {
        const std::string name = ms.model.component_name(c) + ".topology";
        auto it = rngs.find(name);
        if (it == rngs.end())
          mismatch(what, "missing stream " + name);
        ms.topology_rng[c].set_state(it->second);
      }
    }
  }
  next.step = info.step;
  state = std::move(next);
  return info;
}

} // namespace neurotrails
