#include "arithlab/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace arithlab {

void AdamMoments::reset(const std::vector<Param<float>*>& params) {
    m.clear();
    v.clear();
    steps = 0;
    for (const Param<float>* p : params) {
        m.emplace_back(p->data.size(), 0.0f);
        v.emplace_back(p->data.size(), 0.0f);
    }
}

namespace {

constexpr char kMagic[4] = {'A', 'L', 'C', 'P'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    f.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ostream& f, uint64_t v) {
    put_u32(f, static_cast<uint32_t>(v & 0xffffffffu));
    put_u32(f, static_cast<uint32_t>(v >> 32));
}

void put_str(std::ostream& f, const std::string& s) {
    put_u32(f, static_cast<uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_floats(std::ostream& f, const std::vector<float>& v) {
    put_u64(f, v.size());
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

uint32_t get_u32(std::istream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw std::runtime_error("checkpoint: truncated file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t get_u64(std::istream& f) {
    uint64_t lo = get_u32(f);
    uint64_t hi = get_u32(f);
    return lo | (hi << 32);
}

std::string get_str(std::istream& f) {
    uint32_t n = get_u32(f);
    std::string s(n, '\0');
    f.read(s.data(), n);
    if (!f) throw std::runtime_error("checkpoint: truncated string");
    return s;
}

std::vector<float> get_floats(std::istream& f) {
    uint64_t n = get_u64(f);
    std::vector<float> v(n);
    f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!f) throw std::runtime_error("checkpoint: truncated tensor");
    return v;
}

std::string config_text(const ModelConfig& c) {
    std::ostringstream s;
    s << "n_layers=" << c.n_layers << "\nn_heads=" << c.n_heads << "\nd_embed=" << c.d_embed
      << "\ncontext_length=" << c.context_length << "\nvocab_size=" << c.vocab_size
      << "\ndropout=" << c.dropout << "\nweight_tying=" << (c.weight_tying ? 1 : 0) << "\n";
    return s.str();
}

ModelConfig parse_config_text(const std::string& text) {
    ModelConfig c;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "n_layers") c.n_layers = std::stoi(val);
        else if (key == "n_heads") c.n_heads = std::stoi(val);
        else if (key == "d_embed") c.d_embed = std::stoi(val);
        else if (key == "context_length") c.context_length = std::stoi(val);
        else if (key == "vocab_size") c.vocab_size = std::stoi(val);
        else if (key == "dropout") c.dropout = std::stof(val);
        else if (key == "weight_tying") c.weight_tying = val != "0";
        else throw std::runtime_error("checkpoint: unknown config key " + key);
    }
    return c;
}

}  // namespace

Checkpoint Checkpoint::capture(const GptModel& model, const Vocab& vocab,
                               const std::string& vocab_path, long long iteration, uint64_t seed,
                               const AdamMoments* moments) {
    Checkpoint ck;
    ck.config = model.config();
    ck.vocab_path = vocab_path;
    ck.vocab_symbols = vocab.symbols();
    ck.iteration = iteration;
    ck.seed = seed;
    auto params = const_cast<GptModel&>(model).parameters();
    for (const Param<float>* p : params) {
        ck.tensor_names.push_back(p->name);
        ck.tensors.push_back(p->data);
    }
    if (moments) ck.moments = *moments;
    return ck;
}

void Checkpoint::restore_into(GptModel& model) const {
    auto params = model.parameters();
    if (params.size() != tensors.size())
        throw std::runtime_error("checkpoint: tensor count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i]->name != tensor_names[i])
            throw std::runtime_error("checkpoint: tensor order mismatch at " + tensor_names[i]);
        if (params[i]->data.size() != tensors[i].size())
            throw std::runtime_error("checkpoint: tensor size mismatch at " + tensor_names[i]);
        params[i]->data = tensors[i];
    }
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    f.write(kMagic, 4);
    put_u32(f, kVersion);
    put_str(f, config_text(config));
    put_str(f, vocab_path);
    put_str(f, vocab_symbols);
    put_u64(f, static_cast<uint64_t>(iteration));
    put_u64(f, seed);
    put_u32(f, static_cast<uint32_t>(tensors.size()));
    for (size_t i = 0; i < tensors.size(); ++i) {
        put_str(f, tensor_names[i]);
        put_floats(f, tensors[i]);
    }
    f.put(moments ? 1 : 0);
    if (moments) {
        put_u64(f, static_cast<uint64_t>(moments->steps));
        for (size_t i = 0; i < moments->m.size(); ++i) {
            put_floats(f, moments->m[i]);
            put_floats(f, moments->v[i]);
        }
    }
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t version = get_u32(f);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ck;
    ck.config = parse_config_text(get_str(f));
    ck.vocab_path = get_str(f);
    ck.vocab_symbols = get_str(f);
    ck.iteration = static_cast<long long>(get_u64(f));
    ck.seed = get_u64(f);
    uint32_t n = get_u32(f);
    for (uint32_t i = 0; i < n; ++i) {
        ck.tensor_names.push_back(get_str(f));
        ck.tensors.push_back(get_floats(f));
    }
    int has_moments = f.get();
    if (has_moments == 1) {
        AdamMoments mm;
        mm.steps = static_cast<long long>(get_u64(f));
        for (uint32_t i = 0; i < n; ++i) {
            mm.m.push_back(get_floats(f));
            mm.v.push_back(get_floats(f));
        }
        ck.moments = std::move(mm);
    }
    return ck;
}

}  // namespace arithlab
