#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hashswap/common.hpp"

namespace hashswap {

struct Segment {
    uint64_t vaddr = 0;
    uint64_t file_offset = 0;
    uint64_t file_size = 0;   // bytes backed by the file
    uint64_t mem_size = 0;    // may exceed file_size (bss tail)
    uint32_t flags = 0;       // PF_X|PF_W|PF_R
    bool readable() const { return flags & 4; }
    bool writable() const { return flags & 2; }
    bool executable() const { return flags & 1; }
    bool contains(uint64_t addr) const { return addr >= vaddr && addr < vaddr + mem_size; }
};

enum class SectionKind { Code, Data, Bss, Other };

struct Section {
    std::string name;
    uint64_t vaddr = 0;
    uint64_t file_offset = 0;
    uint64_t size = 0;
    SectionKind kind = SectionKind::Other;
    bool contains(uint64_t addr) const { return addr >= vaddr && addr < vaddr + size; }
};

struct Symbol {
    std::string name;
    uint64_t vaddr = 0;
    uint64_t size = 0;
};

// Parsed ELF64 x86-64 executable. The raw file bytes are retained verbatim;
// serialize() of an unedited image reproduces the input file byte for byte.
class BinaryImage {
public:
    static BinaryImage parse(const std::string& path, ByteView file_bytes);
    static BinaryImage parse_file(const std::string& path);

    const Bytes& bytes() const { return bytes_; }
    const std::string& path() const { return path_; }
    uint64_t entry_point() const { return entry_; }
    const std::vector<Segment>& segments() const { return segments_; }
    const std::vector<Section>& sections() const { return sections_; }
    const std::vector<Symbol>& symbols() const { return symbols_; }

    const Section* section(const std::string& name) const;
    const Section* section_at(uint64_t vaddr) const;
    const Segment* segment_at(uint64_t vaddr) const;

    // File-backed bytes at a virtual address, or nullopt for bss/unmapped.
    std::optional<uint64_t> vaddr_to_offset(uint64_t vaddr) const;
    bool read(uint64_t vaddr, uint8_t* out, size_t len) const;
    uint8_t read_byte(uint64_t vaddr) const;

    bool in_code(uint64_t vaddr) const;
    // True for .data/.bss; the segment boundary test used to classify
    // statically allocated buffers.
    bool in_static_data(uint64_t vaddr) const;

    Bytes serialize() const { return bytes_; }

    // ELF header fields needed by the rewriter.
    uint64_t phoff() const { return phoff_; }
    uint16_t phnum() const { return phnum_; }
    uint64_t shoff() const { return shoff_; }
    uint16_t shnum() const { return shnum_; }
    uint16_t shstrndx() const { return shstrndx_; }

private:
    std::string path_;
    Bytes bytes_;
    uint64_t entry_ = 0;
    uint64_t phoff_ = 0, shoff_ = 0;
    uint16_t phnum_ = 0, shnum_ = 0, shstrndx_ = 0;
    std::vector<Segment> segments_;
    std::vector<Section> sections_;
    std::vector<Symbol> symbols_;
};

}  // namespace hashswap
