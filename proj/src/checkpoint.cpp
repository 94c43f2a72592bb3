#include "vsd/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "vsd/config.hpp"

namespace vsd {

namespace {

constexpr char kMagic[4] = {'N', 'V', 'S', 'D'};
constexpr uint32_t kVersion = 1;

template <typename U>
void write_pod(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_pod(std::istream& in, const std::string& file) {
  U v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!in) throw IngestionError("truncated checkpoint: " + file);
  return v;
}

void write_name(std::ostream& out, const std::string& name) {
  write_pod<uint32_t>(out, uint32_t(name.size()));
  out.write(name.data(), std::streamsize(name.size()));
}

std::string read_name(std::istream& in, const std::string& file) {
  const uint32_t len = read_pod<uint32_t>(in, file);
  if (len > 4096) throw IngestionError("implausible name length in " + file);
  std::string name(len, '\0');
  in.read(name.data(), len);
  if (!in) throw IngestionError("truncated checkpoint: " + file);
  return name;
}

void write_dims(std::ostream& out, const Shape& s) {
  write_pod<uint32_t>(out, 4);
  for (long d : {long(s.n), long(s.c), long(s.h), long(s.w)}) {
    write_pod<uint64_t>(out, uint64_t(d));
  }
}

Shape read_dims(std::istream& in, const std::string& file) {
  const uint32_t rank = read_pod<uint32_t>(in, file);
  if (rank != 4) throw IngestionError("unsupported tensor rank in " + file);
  Shape s;
  s.n = int(read_pod<uint64_t>(in, file));
  s.c = int(read_pod<uint64_t>(in, file));
  s.h = int(read_pod<uint64_t>(in, file));
  s.w = int(read_pod<uint64_t>(in, file));
  return s;
}

template <typename T>
void write_values(std::ostream& out, const std::vector<T>& values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            std::streamsize(values.size() * sizeof(T)));
}

template <typename T>
void read_values(std::istream& in, std::vector<T>& values,
                 const std::string& file) {
  in.read(reinterpret_cast<char*>(values.data()),
          std::streamsize(values.size() * sizeof(T)));
  if (!in) throw IngestionError("truncated checkpoint: " + file);
}

void write_net_config(std::ostream& out, const std::string& prefix,
                      const UNetConfig& cfg) {
  char buf[64];
  out << prefix << ".levels=" << cfg.levels << "\n";
  out << prefix << ".base_channels=" << cfg.base_channels << "\n";
  out << prefix << ".channel_cap=" << cfg.channel_cap << "\n";
  out << prefix << ".in_channels=" << cfg.in_channels << "\n";
  out << prefix << ".out_channels=" << cfg.out_channels << "\n";
  out << prefix << ".head="
      << (cfg.head == OutputHead::kDepth ? "depth" : "rgb") << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", cfg.max_depth);
  out << prefix << ".max_depth=" << buf << "\n";
}

UNetConfig read_net_config(KvReader& kv, const std::string& prefix) {
  UNetConfig cfg;
  cfg.levels = kv.get_int(prefix + ".levels", cfg.levels);
  cfg.base_channels = kv.get_int(prefix + ".base_channels", cfg.base_channels);
  cfg.channel_cap = kv.get_int(prefix + ".channel_cap", cfg.channel_cap);
  cfg.in_channels = kv.get_int(prefix + ".in_channels", cfg.in_channels);
  cfg.out_channels = kv.get_int(prefix + ".out_channels", cfg.out_channels);
  const std::string head = kv.get_string(prefix + ".head", "depth");
  if (head == "depth") {
    cfg.head = OutputHead::kDepth;
  } else if (head == "rgb") {
    cfg.head = OutputHead::kRgb;
  } else {
    throw IngestionError("unknown head '" + head + "' in " + kv.source());
  }
  cfg.max_depth = kv.get_double(prefix + ".max_depth", cfg.max_depth);
  return cfg;
}

template <typename T>
void write_net_params(std::ostream& out, const std::string& prefix,
                      const Network<T>& net) {
  for (const auto& p : net.params) {
    write_name(out, prefix + "." + p.name);
    write_dims(out, p.shape);
    write_values(out, p.values);
  }
}

template <typename T>
void write_adam(std::ostream& out, const std::string& prefix,
                const Network<T>& net,
                const std::vector<AdamState<T>>& states) {
  for (size_t i = 0; i < states.size(); ++i) {
    write_name(out, prefix + "." + net.params[i].name);
    write_dims(out, net.params[i].shape);
    write_pod<uint64_t>(out, uint64_t(states[i].t));
    write_values(out, states[i].m);
    write_values(out, states[i].v);
  }
}

}  // namespace

template <typename T>
void save_checkpoint(const TrainState<T>& state,
                     const std::filesystem::path& file) {
  if (!state.depnet_opt.empty() &&
      state.depnet_opt.size() != state.depnet.params.size()) {
    throw ContractError("checkpoint: depnet Adam slots out of sync");
  }
  if (!state.synnet_opt.empty() &&
      state.synnet_opt.size() != state.synnet.params.size()) {
    throw ContractError("checkpoint: synnet Adam slots out of sync");
  }
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IngestionError("cannot write checkpoint: " + file.string());

  out << "format=vsdepth-checkpoint\n";
  out << "step=" << state.global_step << "\n";
  write_net_config(out, "depnet", state.depnet.config);
  write_net_config(out, "synnet", state.synnet.config);
  out << "---\n";

  out.write(kMagic, 4);
  write_pod<uint32_t>(out, kVersion);
  write_pod<uint8_t>(out, uint8_t(sizeof(T)));
  write_pod<uint32_t>(out, uint32_t(state.depnet.params.size() +
                                    state.synnet.params.size()));
  write_net_params(out, "depnet", state.depnet);
  write_net_params(out, "synnet", state.synnet);
  write_pod<uint32_t>(
      out, uint32_t(state.depnet_opt.size() + state.synnet_opt.size()));
  write_adam(out, "depnet", state.depnet, state.depnet_opt);
  write_adam(out, "synnet", state.synnet, state.synnet_opt);
  if (!out) throw IngestionError("short write to " + file.string());
}

template <typename T>
TrainState<T> load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestionError("cannot open checkpoint: " + file.string());

  std::string header;
  std::string line;
  bool delimited = false;
  while (std::getline(in, line)) {
    if (line == "---") {
      delimited = true;
      break;
    }
    header += line;
    header += '\n';
  }
  if (!delimited) {
    throw IngestionError("missing header delimiter in " + file.string());
  }
  KvReader kv(parse_kv_text(header, file.string()), file.string());
  if (kv.get_string("format", "") != "vsdepth-checkpoint") {
    throw IngestionError("not a checkpoint file: " + file.string());
  }

  TrainState<T> state;
  state.global_step = kv.get_long("step", 0);
  const UNetConfig dep_cfg = read_net_config(kv, "depnet");
  const UNetConfig syn_cfg = read_net_config(kv, "synnet");
  kv.finish();

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw IngestionError("bad magic in " + file.string());
  }
  if (read_pod<uint32_t>(in, file.string()) != kVersion) {
    throw IngestionError("unsupported checkpoint version in " + file.string());
  }
  if (read_pod<uint8_t>(in, file.string()) != sizeof(T)) {
    throw IngestionError("checkpoint dtype does not match in " +
                         file.string());
  }

  // Rebuild the structure from the configs, then overwrite values record by
  // record; any drift in names or shapes is a corrupt file.
  state.depnet = build_unet<T>(dep_cfg, 0);
  state.synnet = build_unet<T>(syn_cfg, 0);
  const size_t total =
      state.depnet.params.size() + state.synnet.params.size();
  if (read_pod<uint32_t>(in, file.string()) != total) {
    throw IngestionError("parameter count mismatch in " + file.string());
  }
  auto read_params = [&](Network<T>& net, const std::string& prefix) {
    for (auto& p : net.params) {
      const std::string name = read_name(in, file.string());
      const Shape dims = read_dims(in, file.string());
      if (name != prefix + "." + p.name || !(dims == p.shape)) {
        throw IngestionError("unexpected parameter record '" + name + "' in " +
                             file.string());
      }
      read_values(in, p.values, file.string());
    }
  };
  read_params(state.depnet, "depnet");
  read_params(state.synnet, "synnet");

  const uint32_t adam_count = read_pod<uint32_t>(in, file.string());
  if (adam_count != 0 && adam_count != total) {
    throw IngestionError("Adam record count mismatch in " + file.string());
  }
  if (adam_count == total) {
    auto read_adam = [&](Network<T>& net, std::vector<AdamState<T>>& states,
                         const std::string& prefix) {
      states.resize(net.params.size());
      for (size_t i = 0; i < net.params.size(); ++i) {
        const std::string name = read_name(in, file.string());
        const Shape dims = read_dims(in, file.string());
        if (name != prefix + "." + net.params[i].name ||
            !(dims == net.params[i].shape)) {
          throw IngestionError("unexpected Adam record '" + name + "' in " +
                               file.string());
        }
        states[i].t = long(read_pod<uint64_t>(in, file.string()));
        states[i].m.resize(net.params[i].values.size());
        states[i].v.resize(net.params[i].values.size());
        read_values(in, states[i].m, file.string());
        read_values(in, states[i].v, file.string());
      }
    };
    read_adam(state.depnet, state.depnet_opt, "depnet");
    read_adam(state.synnet, state.synnet_opt, "synnet");
  }
  return state;
}

template void save_checkpoint(const TrainState<float>&,
                              const std::filesystem::path&);
template void save_checkpoint(const TrainState<double>&,
                              const std::filesystem::path&);
template TrainState<float> load_checkpoint(const std::filesystem::path&);
template TrainState<double> load_checkpoint(const std::filesystem::path&);

}  // namespace vsd
