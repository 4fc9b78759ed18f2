#include "stcap/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "stcap/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace stcap {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'C', 'A', 'P', 'C', 'K', '\0'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& out, uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

void write_str(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_doubles(std::ostream& out, const double* data, Eigen::Index n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 8));
}

uint32_t read_u32(std::istream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw Error("checkpoint: truncated file");
    return v;
}

uint64_t read_u64(std::istream& in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw Error("checkpoint: truncated file");
    return v;
}

std::string read_str(std::istream& in) {
    const uint32_t len = read_u32(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw Error("checkpoint: truncated file");
    return s;
}

void read_doubles(std::istream& in, double* data, Eigen::Index n) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 8));
    if (!in) throw Error("checkpoint: truncated file");
}

std::map<std::string, std::string> config_entries(const ModelConfig& cfg) {
    return {
        {"d", std::to_string(cfg.d)},
        {"d_fr", std::to_string(cfg.d_fr)},
        {"d_ft", std::to_string(cfg.d_ft)},
        {"d_p", std::to_string(cfg.d_p)},
        {"layers", std::to_string(cfg.layers)},
        {"heads", std::to_string(cfg.heads)},
        {"ffn", std::to_string(cfg.d_ffn)},
        {"t_max", std::to_string(cfg.t_max)},
        {"sources", std::to_string(cfg.n_sources)},
        {"dropout", std::to_string(cfg.dropout)},
        {"wordvec_file", cfg.wordvec_file},
    };
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const AdamState* optimizer) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("checkpoint: cannot open for writing: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kVersion);

    const auto cfg = config_entries(model.cfg);
    write_u32(out, static_cast<uint32_t>(cfg.size()));
    for (const auto& [key, value] : cfg) {
        write_str(out, key);
        write_str(out, value);
    }

    const auto& words = model.vocab.words();
    write_u32(out, static_cast<uint32_t>(words.size()));
    for (const auto& w : words) write_str(out, w);

    const auto refs = param_refs(model);
    write_u32(out, static_cast<uint32_t>(refs.size()));
    for (const auto& ref : refs) {
        write_str(out, ref.name);
        write_u64(out, static_cast<uint64_t>(ref.size));
        write_doubles(out, ref.data, ref.size);
    }

    out.put(optimizer ? 1 : 0);
    if (optimizer) {
        write_u64(out, static_cast<uint64_t>(optimizer->step));
        for (size_t i = 0; i < refs.size(); ++i) {
            write_doubles(out, optimizer->m[i].data(), optimizer->m[i].size());
            write_doubles(out, optimizer->v[i].data(), optimizer->v[i].size());
        }
    }
    if (!out) throw Error("checkpoint: write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("checkpoint: cannot open: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw Error("checkpoint: bad magic in " + path.string());
    }
    const uint32_t version = read_u32(in);
    if (version != kVersion) {
        throw Error("checkpoint: unsupported version " + std::to_string(version));
    }

    std::map<std::string, std::string> cfg_map;
    const uint32_t n_cfg = read_u32(in);
    for (uint32_t i = 0; i < n_cfg; ++i) {
        std::string key = read_str(in);
        cfg_map[key] = read_str(in);
    }
    ModelConfig cfg;
    auto geti = [&cfg_map](const char* key) {
        auto it = cfg_map.find(key);
        if (it == cfg_map.end()) throw Error(std::string("checkpoint: missing config key ") + key);
        return std::stoi(it->second);
    };
    cfg.d = geti("d");
    cfg.d_fr = geti("d_fr");
    cfg.d_ft = geti("d_ft");
    cfg.d_p = geti("d_p");
    cfg.layers = geti("layers");
    cfg.heads = geti("heads");
    cfg.d_ffn = geti("ffn");
    cfg.t_max = geti("t_max");
    cfg.n_sources = geti("sources");
    cfg.dropout = std::stod(cfg_map.at("dropout"));
    cfg.wordvec_file = cfg_map.at("wordvec_file");

    const uint32_t n_words = read_u32(in);
    if (n_words < Vocabulary::kReservedCount) throw Error("checkpoint: vocabulary too small");
    std::vector<std::string> words;
    for (uint32_t i = 0; i < n_words; ++i) words.push_back(read_str(in));
    const Vocabulary probe;  // reserved markers
    for (int i = 0; i < Vocabulary::kReservedCount; ++i) {
        if (words[static_cast<size_t>(i)] != probe.word(i)) {
            throw Error("checkpoint: reserved vocabulary markers are damaged");
        }
    }
    Vocabulary vocab(std::vector<std::string>(words.begin() + Vocabulary::kReservedCount,
                                              words.end()));

    Checkpoint ck{Model::init(cfg, vocab, 0), std::nullopt};
    auto refs = param_refs(ck.model);
    const uint32_t n_tensors = read_u32(in);
    if (n_tensors != refs.size()) {
        throw Error("checkpoint: tensor count mismatch (" + std::to_string(n_tensors) + " vs " +
                    std::to_string(refs.size()) + ")");
    }
    for (auto& ref : refs) {
        const std::string name = read_str(in);
        if (name != ref.name) {
            throw Error("checkpoint: tensor order mismatch at '" + name + "', expected '" +
                        ref.name + "'");
        }
        const uint64_t size = read_u64(in);
        if (size != static_cast<uint64_t>(ref.size)) {
            throw Error("checkpoint: tensor '" + name + "' has wrong size");
        }
        read_doubles(in, ref.data, ref.size);
    }

    const int has_opt = in.get();
    if (has_opt == 1) {
        AdamState state = AdamState::init_for(ck.model);
        state.step = static_cast<int64_t>(read_u64(in));
        for (size_t i = 0; i < refs.size(); ++i) {
            read_doubles(in, state.m[i].data(), state.m[i].size());
            read_doubles(in, state.v[i].data(), state.v[i].size());
        }
        ck.optimizer = std::move(state);
    }
    return ck;
}

}  // namespace stcap
