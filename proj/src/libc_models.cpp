#include <algorithm>
#include <cstdio>

#include "hashswap/executor.hpp"

namespace hashswap {

namespace {

std::string read_cstr(Machine& m, uint64_t addr, StepEffects& fx, uint64_t cap = 1 << 20) {
    std::string s;
    uint8_t b = 0;
    uint64_t a = addr;
    while (s.size() < cap) {
        m.state.mem.read(a, &b, 1);
        if (!b) break;
        s.push_back(static_cast<char>(b));
        a++;
    }
    fx.reads.push_back({addr, static_cast<uint32_t>(s.size() + 1)});
    return s;
}

// Formatting subset shared by sprintf/printf models: literal text, %%, %c,
// %s, %d/%i/%u/%x/%X with optional zero-pad width and l/ll modifiers. Each
// output segment remembers where its bytes came from so the taint hook can
// apply the same flow a real implementation would produce.
struct FmtSegment {
    size_t off = 0, len = 0;
    enum Src { Const, Mem, Register } src = Const;
    Reg reg = Reg::None;
    uint64_t mem_addr = 0;
    uint32_t mem_len = 0;
};

struct FmtResult {
    std::string text;
    std::vector<FmtSegment> segments;
};

FmtResult run_format(Machine& m, const std::string& fmt, const std::vector<Reg>& arg_regs,
                     StepEffects& fx) {
    FmtResult out;
    size_t next_arg = 0;
    auto take_arg = [&]() -> Reg {
        if (next_arg >= arg_regs.size())
            fail(Errc::BadInput, "format consumes more than " +
                                     std::to_string(arg_regs.size()) + " register arguments");
        return arg_regs[next_arg++];
    };
    for (size_t i = 0; i < fmt.size(); i++) {
        if (fmt[i] != '%') {
            out.segments.push_back({out.text.size(), 1, FmtSegment::Const, Reg::None, 0, 0});
            out.text.push_back(fmt[i]);
            continue;
        }
        i++;
        if (i >= fmt.size()) break;
        if (fmt[i] == '%') {
            out.segments.push_back({out.text.size(), 1, FmtSegment::Const, Reg::None, 0, 0});
            out.text.push_back('%');
            continue;
        }
        bool zero_pad = false;
        int width = 0;
        int longs = 0;
        while (i < fmt.size() && (fmt[i] == '0' || (fmt[i] >= '1' && fmt[i] <= '9'))) {
            if (fmt[i] == '0' && width == 0) zero_pad = true;
            else width = width * 10 + (fmt[i] - '0');
            i++;
        }
        while (i < fmt.size() && fmt[i] == 'l') { longs++; i++; }
        if (i >= fmt.size()) break;
        char conv = fmt[i];
        char numbuf[32];
        switch (conv) {
            case 'c': {
                Reg r = take_arg();
                out.segments.push_back({out.text.size(), 1, FmtSegment::Register, r, 0, 0});
                out.text.push_back(static_cast<char>(m.state.reg(r) & 0xff));
                break;
            }
            case 's': {
                Reg r = take_arg();
                uint64_t addr = m.state.reg(r);
                std::string s = read_cstr(m, addr, fx);
                out.segments.push_back({out.text.size(), s.size(), FmtSegment::Mem, r, addr,
                                        static_cast<uint32_t>(s.size())});
                out.text += s;
                break;
            }
            case 'd': case 'i': case 'u': case 'x': case 'X': {
                Reg r = take_arg();
                uint64_t raw = m.state.reg(r);
                char spec[16];
                const char* lmod = longs >= 1 ? "ll" : "";
                std::snprintf(spec, sizeof spec, "%%%s%d%s%c", zero_pad ? "0" : "", width, lmod,
                              conv == 'i' ? 'd' : conv);
                if (longs >= 1) {
                    if (conv == 'd' || conv == 'i')
                        std::snprintf(numbuf, sizeof numbuf, spec, static_cast<long long>(raw));
                    else
                        std::snprintf(numbuf, sizeof numbuf, spec,
                                      static_cast<unsigned long long>(raw));
                } else {
                    char spec32[16];
                    std::snprintf(spec32, sizeof spec32, "%%%s%d%c", zero_pad ? "0" : "", width,
                                  conv == 'i' ? 'd' : conv);
                    if (conv == 'd' || conv == 'i')
                        std::snprintf(numbuf, sizeof numbuf, spec32,
                                      static_cast<int>(raw & 0xffffffff));
                    else
                        std::snprintf(numbuf, sizeof numbuf, spec32,
                                      static_cast<unsigned>(raw & 0xffffffff));
                }
                size_t n = std::strlen(numbuf);
                out.segments.push_back({out.text.size(), n, FmtSegment::Register, r, 0, 0});
                out.text.append(numbuf, n);
                break;
            }
            default:
                fail(Errc::BadInput, std::string("unsupported conversion %") + conv);
        }
    }
    return out;
}

void emit_segments(uint64_t dst, const FmtResult& r, StepEffects& fx) {
    for (const FmtSegment& s : r.segments) {
        if (!s.len) continue;
        ModelWrite w;
        w.addr = dst + s.off;
        w.len = static_cast<uint32_t>(s.len);
        switch (s.src) {
            case FmtSegment::Const: w.constant = true; break;
            case FmtSegment::Register: w.src_regs.push_back(s.reg); break;
            case FmtSegment::Mem:
                w.src_mem.push_back({s.mem_addr, s.mem_len});
                w.bytewise = true;
                break;
        }
        fx.model_writes.push_back(w);
    }
}

void model_write_bytes(Machine& m, uint64_t addr, ByteView data, StepEffects& fx) {
    if (!data.empty()) m.state.mem.write(addr, data.data(), data.size());
    fx.writes.push_back({addr, static_cast<uint32_t>(data.size())});
}

}  // namespace

std::vector<LibcModel> builtin_libc_models() {
    std::vector<LibcModel> v;

    v.push_back({"strlen", [](Machine& m, StepEffects& fx) {
        uint64_t s = m.state.reg(Reg::RDI);
        std::string str = read_cstr(m, s, fx);
        m.state.set_reg(Reg::RAX, str.size());
        fx.model_ret_src_mem.push_back({s, static_cast<uint32_t>(str.size() + 1)});
    }});

    v.push_back({"malloc", [](Machine& m, StepEffects& fx) {
        (void)fx;
        uint64_t size = m.state.reg(Reg::RDI);
        uint64_t base = m.heap_bump(size);
        m.state.heap_allocations.push_back({base, size, m.current_call_site(), true});
        m.state.set_reg(Reg::RAX, base);
    }});

    v.push_back({"calloc", [](Machine& m, StepEffects& fx) {
        uint64_t n = m.state.reg(Reg::RDI), esz = m.state.reg(Reg::RSI);
        uint64_t size = n * esz;
        uint64_t base = m.heap_bump(size);
        Bytes zero(size, 0);
        model_write_bytes(m, base, zero, fx);
        ModelWrite w{base, static_cast<uint32_t>(size), {}, {}, false, true};
        fx.model_writes.push_back(w);
        m.state.heap_allocations.push_back({base, size, m.current_call_site(), true});
        m.state.set_reg(Reg::RAX, base);
    }});

    v.push_back({"realloc", [](Machine& m, StepEffects& fx) {
        uint64_t old = m.state.reg(Reg::RDI), size = m.state.reg(Reg::RSI);
        uint64_t base = m.heap_bump(size);
        if (old) {
            for (HeapAllocation& h : m.state.heap_allocations) {
                if (h.live && h.base == old) {
                    uint64_t n = std::min(h.size, size);
                    Bytes buf(n);
                    m.state.mem.read(old, buf.data(), n);
                    fx.reads.push_back({old, static_cast<uint32_t>(n)});
                    model_write_bytes(m, base, buf, fx);
                    ModelWrite w{base, static_cast<uint32_t>(n), {},
                                 {{old, static_cast<uint32_t>(n)}}, true, false};
                    fx.model_writes.push_back(w);
                    h.live = false;
                    break;
                }
            }
        }
        m.state.heap_allocations.push_back({base, size, m.current_call_site(), true});
        m.state.set_reg(Reg::RAX, base);
    }});

    v.push_back({"free", [](Machine& m, StepEffects& fx) {
        (void)fx;
        uint64_t p = m.state.reg(Reg::RDI);
        for (HeapAllocation& h : m.state.heap_allocations)
            if (h.live && h.base == p) { h.live = false; break; }
    }});

    v.push_back({"memcpy", [](Machine& m, StepEffects& fx) {
        uint64_t dst = m.state.reg(Reg::RDI), src = m.state.reg(Reg::RSI);
        uint64_t n = m.state.reg(Reg::RDX);
        Bytes buf(n);
        m.state.mem.read(src, buf.data(), n);
        fx.reads.push_back({src, static_cast<uint32_t>(n)});
        model_write_bytes(m, dst, buf, fx);
        ModelWrite w{dst, static_cast<uint32_t>(n), {}, {{src, static_cast<uint32_t>(n)}},
                     true, false};
        fx.model_writes.push_back(w);
        m.state.set_reg(Reg::RAX, dst);
    }});

    v.push_back({"memset", [](Machine& m, StepEffects& fx) {
        uint64_t dst = m.state.reg(Reg::RDI);
        uint8_t c = static_cast<uint8_t>(m.state.reg(Reg::RSI));
        uint64_t n = m.state.reg(Reg::RDX);
        Bytes buf(n, c);
        model_write_bytes(m, dst, buf, fx);
        ModelWrite w{dst, static_cast<uint32_t>(n), {Reg::RSI}, {}, false, false};
        fx.model_writes.push_back(w);
        m.state.set_reg(Reg::RAX, dst);
    }});

    v.push_back({"strcpy", [](Machine& m, StepEffects& fx) {
        uint64_t dst = m.state.reg(Reg::RDI), src = m.state.reg(Reg::RSI);
        std::string s = read_cstr(m, src, fx);
        Bytes buf(s.begin(), s.end());
        buf.push_back(0);
        model_write_bytes(m, dst, buf, fx);
        ModelWrite w{dst, static_cast<uint32_t>(s.size()), {},
                     {{src, static_cast<uint32_t>(s.size())}}, true, false};
        fx.model_writes.push_back(w);
        m.state.set_reg(Reg::RAX, dst);
    }});

    v.push_back({"sprintf", [](Machine& m, StepEffects& fx) {
        uint64_t dst = m.state.reg(Reg::RDI);
        std::string fmt = read_cstr(m, m.state.reg(Reg::RSI), fx);
        FmtResult r = run_format(m, fmt, {Reg::RDX, Reg::RCX, Reg::R8, Reg::R9}, fx);
        Bytes buf(r.text.begin(), r.text.end());
        buf.push_back(0);
        model_write_bytes(m, dst, buf, fx);
        emit_segments(dst, r, fx);
        m.state.set_reg(Reg::RAX, r.text.size());
    }});

    v.push_back({"printf", [](Machine& m, StepEffects& fx) {
        std::string fmt = read_cstr(m, m.state.reg(Reg::RDI), fx);
        FmtResult r = run_format(m, fmt, {Reg::RSI, Reg::RDX, Reg::RCX, Reg::R8, Reg::R9}, fx);
        m.captured_stdout.insert(m.captured_stdout.end(), r.text.begin(), r.text.end());
        m.state.set_reg(Reg::RAX, r.text.size());
    }});

    v.push_back({"puts", [](Machine& m, StepEffects& fx) {
        std::string s = read_cstr(m, m.state.reg(Reg::RDI), fx);
        m.captured_stdout.insert(m.captured_stdout.end(), s.begin(), s.end());
        m.captured_stdout.push_back('\n');
        m.state.set_reg(Reg::RAX, 1);
    }});

    v.push_back({"fputs", [](Machine& m, StepEffects& fx) {
        std::string s = read_cstr(m, m.state.reg(Reg::RDI), fx);
        m.captured_stdout.insert(m.captured_stdout.end(), s.begin(), s.end());
        m.state.set_reg(Reg::RAX, 1);
    }});

    v.push_back({"write", [](Machine& m, StepEffects& fx) {
        uint64_t fd = m.state.reg(Reg::RDI), buf = m.state.reg(Reg::RSI);
        uint64_t n = m.state.reg(Reg::RDX);
        Bytes tmp(n);
        m.state.mem.read(buf, tmp.data(), n);
        fx.reads.push_back({buf, static_cast<uint32_t>(n)});
        if (fd == 1 || fd == 2)
            m.captured_stdout.insert(m.captured_stdout.end(), tmp.begin(), tmp.end());
        m.state.set_reg(Reg::RAX, n);
    }});

    v.push_back({"exit", [](Machine& m, StepEffects& fx) {
        (void)fx;
        m.request_exit(static_cast<int>(m.state.reg(Reg::RDI)));
    }});

    return v;
}

}  // namespace hashswap
