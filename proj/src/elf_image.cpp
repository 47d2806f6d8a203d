#include "hashswap/elf_image.hpp"

#include <algorithm>

namespace hashswap {

namespace {
constexpr uint16_t ET_EXEC = 2;
constexpr uint16_t ET_DYN = 3;
constexpr uint16_t EM_X86_64 = 0x3e;
constexpr uint32_t PT_LOAD = 1;
constexpr uint32_t SHT_PROGBITS = 1;
constexpr uint32_t SHT_SYMTAB = 2;
constexpr uint32_t SHT_NOBITS = 8;
constexpr uint64_t SHF_EXECINSTR = 0x4;
constexpr uint64_t SHF_ALLOC = 0x2;

std::string read_str(ByteView data, uint64_t off) {
    std::string s;
    while (off < data.size() && data[off] != 0) s.push_back(static_cast<char>(data[off++]));
    return s;
}
}  // namespace

BinaryImage BinaryImage::parse_file(const std::string& path) {
    Bytes data = read_file(path);
    return parse(path, data);
}

BinaryImage BinaryImage::parse(const std::string& path, ByteView file) {
    if (file.size() < 64) fail(Errc::MalformedElf, "file shorter than an ELF64 header");
    if (!(file[0] == 0x7f && file[1] == 'E' && file[2] == 'L' && file[3] == 'F'))
        fail(Errc::MalformedElf, "bad ELF magic");
    if (file[4] != 2) fail(Errc::MalformedElf, "not a 64-bit ELF (class)");
    if (file[5] != 1) fail(Errc::MalformedElf, "not little-endian");

    BinaryImage img;
    img.path_ = path;
    img.bytes_.assign(file.begin(), file.end());

    uint16_t type = read_le<uint16_t>(file, 16);
    uint16_t machine = read_le<uint16_t>(file, 18);
    if (machine != EM_X86_64)
        fail(Errc::MalformedElf, "unsupported machine 0x" + hex_addr(machine));
    if (type == ET_DYN) fail(Errc::MalformedElf, "PIE/shared objects not accepted");
    if (type != ET_EXEC) fail(Errc::MalformedElf, "not an executable (e_type)");

    img.entry_ = read_le<uint64_t>(file, 24);
    img.phoff_ = read_le<uint64_t>(file, 32);
    img.shoff_ = read_le<uint64_t>(file, 40);
    uint16_t phentsize = read_le<uint16_t>(file, 54);
    img.phnum_ = read_le<uint16_t>(file, 56);
    uint16_t shentsize = read_le<uint16_t>(file, 58);
    img.shnum_ = read_le<uint16_t>(file, 60);
    img.shstrndx_ = read_le<uint16_t>(file, 62);

    if (img.phnum_ && phentsize != 56) fail(Errc::MalformedElf, "bad e_phentsize");
    if (img.shnum_ && shentsize != 64) fail(Errc::MalformedElf, "bad e_shentsize");
    if (img.phoff_ + uint64_t(img.phnum_) * 56 > file.size())
        fail(Errc::TruncatedFile, "program header table past end of file");
    if (img.shoff_ + uint64_t(img.shnum_) * 64 > file.size())
        fail(Errc::TruncatedFile, "section header table past end of file");

    for (uint16_t i = 0; i < img.phnum_; i++) {
        uint64_t off = img.phoff_ + uint64_t(i) * 56;
        uint32_t p_type = read_le<uint32_t>(file, off);
        if (p_type != PT_LOAD) continue;
        Segment seg;
        seg.flags = read_le<uint32_t>(file, off + 4);
        seg.file_offset = read_le<uint64_t>(file, off + 8);
        seg.vaddr = read_le<uint64_t>(file, off + 16);
        seg.file_size = read_le<uint64_t>(file, off + 32);
        seg.mem_size = read_le<uint64_t>(file, off + 40);
        if (seg.file_offset + seg.file_size > file.size())
            fail(Errc::TruncatedFile, "segment data past end of file");
        img.segments_.push_back(seg);
    }
    // Loadable segments must not overlap in the virtual address space.
    auto segs = img.segments_;
    std::sort(segs.begin(), segs.end(),
              [](const Segment& a, const Segment& b) { return a.vaddr < b.vaddr; });
    for (size_t i = 1; i < segs.size(); i++)
        if (segs[i].vaddr < segs[i - 1].vaddr + segs[i - 1].mem_size)
            fail(Errc::MalformedElf, "overlapping loadable segments");

    // Section headers (optional in principle; present in our executables).
    uint64_t strtab_off = 0, strtab_size = 0;
    if (img.shnum_ && img.shstrndx_ < img.shnum_) {
        uint64_t off = img.shoff_ + uint64_t(img.shstrndx_) * 64;
        strtab_off = read_le<uint64_t>(file, off + 24);
        strtab_size = read_le<uint64_t>(file, off + 32);
        if (strtab_off + strtab_size > file.size())
            fail(Errc::TruncatedFile, "shstrtab past end of file");
    }
    int64_t symtab_idx = -1;
    for (uint16_t i = 0; i < img.shnum_; i++) {
        uint64_t off = img.shoff_ + uint64_t(i) * 64;
        uint32_t name_off = read_le<uint32_t>(file, off);
        uint32_t sh_type = read_le<uint32_t>(file, off + 4);
        uint64_t sh_flags = read_le<uint64_t>(file, off + 8);
        Section sec;
        sec.vaddr = read_le<uint64_t>(file, off + 16);
        sec.file_offset = read_le<uint64_t>(file, off + 24);
        sec.size = read_le<uint64_t>(file, off + 32);
        if (strtab_size && name_off < strtab_size)
            sec.name = read_str(file, strtab_off + name_off);
        if (sh_type == SHT_SYMTAB) symtab_idx = i;
        if (!(sh_flags & SHF_ALLOC)) continue;
        if (sh_type == SHT_NOBITS)
            sec.kind = SectionKind::Bss;
        else if (sh_flags & SHF_EXECINSTR)
            sec.kind = SectionKind::Code;
        else if (sh_type == SHT_PROGBITS)
            sec.kind = SectionKind::Data;
        img.sections_.push_back(sec);
    }

    // Every allocatable section must lie inside one loadable segment.
    for (const Section& sec : img.sections_) {
        if (sec.size == 0) continue;
        bool housed = false;
        for (const Segment& seg : img.segments_)
            if (sec.vaddr >= seg.vaddr && sec.vaddr + sec.size <= seg.vaddr + seg.mem_size)
                housed = true;
        if (!housed)
            fail(Errc::MalformedElf, "section " + sec.name + " outside all loadable segments");
    }

    // Symbol table: used only to bind libc models by name. Stripped inputs
    // simply yield no symbols.
    if (symtab_idx >= 0) {
        uint64_t off = img.shoff_ + uint64_t(symtab_idx) * 64;
        uint64_t sym_off = read_le<uint64_t>(file, off + 24);
        uint64_t sym_size = read_le<uint64_t>(file, off + 32);
        uint32_t link = read_le<uint32_t>(file, off + 40);
        uint64_t str_off = 0, str_size = 0;
        if (link < img.shnum_) {
            uint64_t loff = img.shoff_ + uint64_t(link) * 64;
            str_off = read_le<uint64_t>(file, loff + 24);
            str_size = read_le<uint64_t>(file, loff + 32);
        }
        if (sym_off + sym_size > file.size())
            fail(Errc::TruncatedFile, "symtab past end of file");
        for (uint64_t o = sym_off; o + 24 <= sym_off + sym_size; o += 24) {
            uint32_t name_off = read_le<uint32_t>(file, o);
            uint64_t value = read_le<uint64_t>(file, o + 8);
            uint64_t size = read_le<uint64_t>(file, o + 16);
            if (name_off == 0 || value == 0 || name_off >= str_size) continue;
            img.symbols_.push_back({read_str(file, str_off + name_off), value, size});
        }
    }
    return img;
}

const Section* BinaryImage::section(const std::string& name) const {
    for (const Section& s : sections_)
        if (s.name == name) return &s;
    return nullptr;
}

const Section* BinaryImage::section_at(uint64_t vaddr) const {
    for (const Section& s : sections_)
        if (s.size && s.contains(vaddr)) return &s;
    return nullptr;
}

const Segment* BinaryImage::segment_at(uint64_t vaddr) const {
    for (const Segment& s : segments_)
        if (s.contains(vaddr)) return &s;
    return nullptr;
}

std::optional<uint64_t> BinaryImage::vaddr_to_offset(uint64_t vaddr) const {
    for (const Segment& s : segments_)
        if (vaddr >= s.vaddr && vaddr < s.vaddr + s.file_size)
            return s.file_offset + (vaddr - s.vaddr);
    return std::nullopt;
}

bool BinaryImage::read(uint64_t vaddr, uint8_t* out, size_t len) const {
    auto off = vaddr_to_offset(vaddr);
    if (!off) return false;
    // Reads must not straddle past the file-backed part of the segment.
    const Segment* seg = segment_at(vaddr);
    if (!seg || vaddr + len > seg->vaddr + seg->file_size) return false;
    std::memcpy(out, bytes_.data() + *off, len);
    return true;
}

uint8_t BinaryImage::read_byte(uint64_t vaddr) const {
    uint8_t b = 0;
    if (!read(vaddr, &b, 1)) fail(Errc::MemoryFault, "unmapped read at " + hex_addr(vaddr));
    return b;
}

bool BinaryImage::in_code(uint64_t vaddr) const {
    const Section* s = section_at(vaddr);
    return s && s->kind == SectionKind::Code;
}

bool BinaryImage::in_static_data(uint64_t vaddr) const {
    const Section* s = section_at(vaddr);
    return s && (s->kind == SectionKind::Data || s->kind == SectionKind::Bss) &&
           s->name != ".rodata";
}

}  // namespace hashswap
