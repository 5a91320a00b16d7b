#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace arithlab {

// Character-level vocabulary: the sorted set of distinct characters of a
// corpus, ids in [0, size). Immutable once built.
class Vocab {
public:
    Vocab() = default;
    static Vocab build(const std::string& corpus);
    static Vocab from_symbols(std::string symbols);  // deduplicates and sorts

    size_t size() const { return symbols_.size(); }
    const std::string& symbols() const { return symbols_; }
    bool contains(char c) const { return ids_[static_cast<unsigned char>(c)] >= 0; }
    int id_of(char c) const;              // throws on unknown character
    char char_of(int id) const;           // throws on out-of-range id

    std::vector<uint16_t> encode(const std::string& text) const;
    std::string decode(const std::vector<uint16_t>& ids) const;

    // One symbol per line; '\n', ' ' and '\' are escaped.
    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

private:
    std::string symbols_;
    std::array<int, 256> ids_{};

    void rebuild_index();
};

// Token cache file: 8-byte header ("ATK1" + u32 vocab size, little endian)
// followed by little-endian u16 token ids.
void write_token_file(const std::string& path, const std::vector<uint16_t>& tokens,
                      uint32_t vocab_size);
struct TokenFile {
    uint32_t vocab_size = 0;
    std::vector<uint16_t> tokens;
};
TokenFile read_token_file(const std::string& path);

}  // namespace arithlab
