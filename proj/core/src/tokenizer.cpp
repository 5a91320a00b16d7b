#include "arithlab/tokenizer.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

namespace arithlab {

Vocab Vocab::build(const std::string& corpus) {
    if (corpus.empty()) throw std::invalid_argument("Vocab::build: empty corpus");
    std::set<char> chars(corpus.begin(), corpus.end());
    Vocab v;
    v.symbols_.assign(chars.begin(), chars.end());
    v.rebuild_index();
    return v;
}

Vocab Vocab::from_symbols(std::string symbols) {
    std::sort(symbols.begin(), symbols.end());
    symbols.erase(std::unique(symbols.begin(), symbols.end()), symbols.end());
    Vocab v;
    v.symbols_ = std::move(symbols);
    v.rebuild_index();
    return v;
}

void Vocab::rebuild_index() {
    ids_.fill(-1);
    for (size_t i = 0; i < symbols_.size(); ++i)
        ids_[static_cast<unsigned char>(symbols_[i])] = static_cast<int>(i);
}

int Vocab::id_of(char c) const {
    int id = ids_[static_cast<unsigned char>(c)];
    if (id < 0)
        throw std::out_of_range(std::string("Vocab: unknown character 0x") +
                                std::to_string(static_cast<unsigned char>(c)));
    return id;
}

char Vocab::char_of(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= symbols_.size())
        throw std::out_of_range("Vocab: id out of range: " + std::to_string(id));
    return symbols_[static_cast<size_t>(id)];
}

std::vector<uint16_t> Vocab::encode(const std::string& text) const {
    std::vector<uint16_t> out;
    out.reserve(text.size());
    for (char c : text) out.push_back(static_cast<uint16_t>(id_of(c)));
    return out;
}

std::string Vocab::decode(const std::vector<uint16_t>& ids) const {
    std::string out;
    out.reserve(ids.size());
    for (uint16_t id : ids) out += char_of(id);
    return out;
}

void Vocab::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("Vocab::save: cannot open " + path);
    for (char c : symbols_) {
        if (c == '\n')
            f << "\\n";
        else if (c == ' ')
            f << "\\s";
        else if (c == '\\')
            f << "\\\\";
        else
            f << c;
        f << '\n';
    }
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("Vocab::load: cannot open " + path);
    std::string symbols, line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (line == "\\n")
            symbols += '\n';
        else if (line == "\\s")
            symbols += ' ';
        else if (line == "\\\\")
            symbols += '\\';
        else if (line.size() == 1)
            symbols += line[0];
        else
            throw std::runtime_error("Vocab::load: malformed line '" + line + "'");
    }
    return from_symbols(std::move(symbols));
}

namespace {
constexpr char kTokenMagic[4] = {'A', 'T', 'K', '1'};
}

void write_token_file(const std::string& path, const std::vector<uint16_t>& tokens,
                      uint32_t vocab_size) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_token_file: cannot open " + path);
    f.write(kTokenMagic, 4);
    unsigned char vs[4] = {static_cast<unsigned char>(vocab_size & 0xff),
                           static_cast<unsigned char>((vocab_size >> 8) & 0xff),
                           static_cast<unsigned char>((vocab_size >> 16) & 0xff),
                           static_cast<unsigned char>((vocab_size >> 24) & 0xff)};
    f.write(reinterpret_cast<char*>(vs), 4);
    for (uint16_t t : tokens) {
        unsigned char b[2] = {static_cast<unsigned char>(t & 0xff),
                              static_cast<unsigned char>(t >> 8)};
        f.write(reinterpret_cast<char*>(b), 2);
    }
}

TokenFile read_token_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_token_file: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kTokenMagic, 4) != 0)
        throw std::runtime_error("read_token_file: bad magic in " + path);
    unsigned char vs[4];
    f.read(reinterpret_cast<char*>(vs), 4);
    if (!f) throw std::runtime_error("read_token_file: truncated header in " + path);
    TokenFile out;
    out.vocab_size = static_cast<uint32_t>(vs[0]) | (static_cast<uint32_t>(vs[1]) << 8) |
                     (static_cast<uint32_t>(vs[2]) << 16) | (static_cast<uint32_t>(vs[3]) << 24);
    unsigned char b[2];
    while (f.read(reinterpret_cast<char*>(b), 2))
        out.tokens.push_back(static_cast<uint16_t>(b[0] | (b[1] << 8)));
    return out;
}

}  // namespace arithlab
