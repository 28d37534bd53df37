#!/usr/bin/env python3
"""Writes the mini corpus: x86-64 O0/O3 listings built from parameterized
function templates, simulated model responses for every function, and
synthetic embeddings.

The responses stand in for recorded model output. Each one is the template's
reference document with seeded noise (miscounted immediates, dropped
categories, wrong labels), and a few functions get malformed or
schema-invalid first attempts so replay exercises the retry path.

Usage: python3 generate.py   (writes into the directory of this script)
"""

import json
import random
from pathlib import Path

SEED = 20240611
LIBRARY = "minilib"
OUT = Path(__file__).resolve().parent


def doc(**kw):
    base = {
        "in_param_cnt": 0,
        "in_param_types": [],
        "ret_type": "None",
        "dominant_operation_categories": ["DataMovement"],
        "loop": False,
        "jump_table": False,
        "indexed_addr": False,
        "simd": False,
        "subcall_targets": 0,
        "int_consts": [],
        "float_consts": [],
        "imm_values_cnt": 0,
        "string_literals": False,
        "mutates_inputs": False,
        "mutates_globals": False,
        "mem_alloc": False,
        "io_ops": False,
        "block_mem_ops": False,
        "error_handling": False,
        "interrupts_syscalls": 0,
        "inferred_algo": "Undetermined",
    }
    base.update(kw)
    base["in_param_cnt"] = len(base["in_param_types"])
    return base


def h(v):
    return "0x%x" % v


def ida(v):
    """IDA-style hex immediate."""
    s = "%X" % v
    if s[0] in "ABCDEF":
        s = "0" + s
    return s + "h"


# Each template returns (o0_lines, o3_lines, reference_document). Lines may
# contain `L<n>:` label markers and `@L<n>` references, resolved to
# addresses by `assemble`.


def t_checksum(r, i):
    k = r.choice([0x5A5A5A5A, 0x9E3779B9, 0x3C6EF372, 0x1B873593, 0xCC9E2D51]) ^ (i << 8)
    rot = r.choice([3, 5, 7, 13])
    o0 = [
        "push rbp", "mov rbp, rsp", "mov [rbp-18h], rdi", "mov [rbp-1Ch], esi",
        "mov dword ptr [rbp-4], 0", "mov dword ptr [rbp-8], 0", "jmp short @L2",
        "L1:", "mov eax, [rbp-8]", "movsxd rdx, eax", "mov rax, [rbp-18h]", "add rax, rdx",
        "movzx eax, byte ptr [rax]", "add [rbp-4], eax", f"rol dword ptr [rbp-4], {rot}",
        "add dword ptr [rbp-8], 1",
        "L2:", "mov eax, [rbp-8]", "cmp eax, [rbp-1Ch]", "jl short @L1",
        "mov eax, [rbp-4]", f"xor eax, {ida(k)}", "pop rbp", "retn",
    ]
    o3 = [
        "test esi, esi", "jle short @L2", "lea ecx, [rsi-1]", "xor eax, eax",
        "lea rdx, [rdi+rcx+1]",
        "L1:", "movzx ecx, byte ptr [rdi]", "add rdi, 1", "add eax, ecx", f"rol eax, {rot}",
        "cmp rdi, rdx", "jnz short @L1", f"xor eax, {ida(k)}", "retn",
        "L2:", f"mov eax, {ida(k)}", "retn",
    ]
    d = doc(in_param_types=["Pointer", "Integer"], ret_type="Integer",
            dominant_operation_categories=["Arithmetic", "MemoryAccess"], loop=True,
            int_consts=[h(k)], imm_values_cnt=4, inferred_algo="DataProcessing")
    return o0, o3, d


def t_fnv(r, i):
    basis = 0x811C9DC5 ^ (i * 0x101)
    prime = r.choice([0x1000193, 0x100000001B3 & 0xFFFFFFFF, 0x01000193 + 2 * i])
    o0 = [
        "push rbp", "mov rbp, rsp", "mov [rbp-18h], rdi", f"mov dword ptr [rbp-4], {ida(basis)}",
        "jmp short @L2",
        "L1:", "mov rax, [rbp-18h]", "movzx eax, byte ptr [rax]", "movzx eax, al", "xor [rbp-4], eax",
        "mov eax, [rbp-4]", f"imul eax, {ida(prime)}", "mov [rbp-4], eax", "add qword ptr [rbp-18h], 1",
        "L2:", "mov rax, [rbp-18h]", "movzx eax, byte ptr [rax]", "test al, al", "jnz short @L1",
        "mov eax, [rbp-4]", "pop rbp", "retn",
    ]
    o3 = [
        "movzx edx, byte ptr [rdi]", f"mov eax, {ida(basis)}", "test dl, dl", "jz short @L2",
        "L1:", "add rdi, 1", "xor eax, edx", f"imul eax, {ida(prime)}", "movzx edx, byte ptr [rdi]",
        "test dl, dl", "jnz short @L1",
        "L2:", "retn",
    ]
    d = doc(in_param_types=["Pointer"], ret_type="Integer",
            dominant_operation_categories=["Arithmetic", "Bitwise", "MemoryAccess"], loop=True,
            int_consts=sorted([h(basis), h(prime)]), imm_values_cnt=3, inferred_algo="CryptographicHashing")
    return o0, o3, d


def t_alloc(r, i):
    magic = 0x4D4F0000 | r.randrange(0x1000, 0xFFFF)
    hdr = r.choice([8, 16, 24, 32])
    o0 = [
        "push rbp", "mov rbp, rsp", "sub rsp, 20h", "mov [rbp-18h], rdi", "mov rax, [rbp-18h]",
        f"add rax, {hdr}", "mov rdi, rax", "call _malloc", "mov [rbp-8], rax", "cmp qword ptr [rbp-8], 0",
        "jnz short @L1", "mov eax, 0", "jmp short @L2",
        "L1:", "mov rax, [rbp-8]", f"mov dword ptr [rax], {ida(magic)}", "mov rdx, [rbp-18h]",
        "mov rax, [rbp-8]", f"add rax, {hdr}", "mov esi, 0", "mov rdi, rax", "call _memset",
        "mov rax, [rbp-8]", f"add rax, {hdr}",
        "L2:", "leave", "retn",
    ]
    o3 = [
        "push rbx", "mov rbx, rdi", f"lea rdi, [rdi+{hdr}]", "call _malloc", "test rax, rax", "jz short @L1",
        f"mov dword ptr [rax], {ida(magic)}", f"lea rdi, [rax+{hdr}]", "mov rdx, rbx", "xor esi, esi",
        "call _memset", "pop rbx", "retn",
        "L1:", "xor eax, eax", "pop rbx", "retn",
    ]
    d = doc(in_param_types=["Integer"], ret_type="Pointer",
            dominant_operation_categories=["DataMovement", "SubroutineCall"], subcall_targets=2,
            int_consts=[h(magic), h(hdr)], imm_values_cnt=4, mem_alloc=True, block_mem_ops=True,
            error_handling=True, inferred_algo="MemoryManagement")
    return o0, o3, d


def t_syscall(r, i):
    nr = [0, 1, 2, 3, 8, 9, 39, 60, 62, 72][i % 10]
    o0 = [
        "push rbp", "mov rbp, rsp", "mov [rbp-14h], edi", "mov [rbp-20h], rsi", "mov [rbp-28h], rdx",
        f"mov eax, {nr}", "mov edi, [rbp-14h]", "mov rsi, [rbp-20h]", "mov rdx, [rbp-28h]", "syscall",
        "mov [rbp-8], rax", "cmp qword ptr [rbp-8], 0", "jns short @L1", "mov rax, [rbp-8]", "neg eax",
        "mov cs:errno, eax", "mov rax, 0FFFFFFFFFFFFFFFFh",
        "L1:", "pop rbp", "retn",
    ]
    o3 = [
        f"mov eax, {nr}", "movsxd rdi, edi", "syscall", "test rax, rax", "js short @L1", "retn",
        "L1:", "neg eax", "mov cs:errno, eax", "mov rax, 0FFFFFFFFFFFFFFFFh", "retn",
    ]
    consts = [h(nr)] if nr > 1 else []
    d = doc(in_param_types=["Integer", "Pointer", "Integer"], ret_type="Integer",
            dominant_operation_categories=["DataMovement", "ConditionalBranching"], int_consts=consts,
            imm_values_cnt=3, mutates_globals=True, io_ops=nr in (0, 1, 2, 3), error_handling=True,
            interrupts_syscalls=1, inferred_algo="SystemOsInteraction")
    return o0, o3, d


def t_dispatch(r, i):
    n = r.choice([4, 5, 6, 7, 8])
    base = r.randrange(0x100, 0x4000)
    table = "off_%X" % (0x402000 + 0x40 * i)
    o0 = [
        "push rbp", "mov rbp, rsp", "mov [rbp-4], edi", "mov [rbp-10h], rsi", f"cmp dword ptr [rbp-4], {n - 1}",
        "ja short @L9", "mov eax, [rbp-4]", f"mov rax, ds:{table}[rax*8]", "jmp rax",
    ]
    o3 = [f"cmp edi, {n - 1}", "ja short @L9", "mov edi, edi", f"jmp ds:{table}[rdi*8]"]
    for c in range(n):
        o0 += [f"mov eax, {ida(base + c * 0x10)}", "jmp short @L8"]
        o3 += [f"mov eax, {ida(base + c * 0x10)}", "retn"]
    o0 += ["L9:", "mov eax, 0FFFFFFFFh", "L8:", "pop rbp", "retn"]
    o3 += ["L9:", "mov eax, 0FFFFFFFFh", "retn"]
    consts = sorted({h(base + c * 0x10) for c in range(n)} | {h(n - 1)})[:15]
    d = doc(in_param_types=["Integer"], ret_type="Integer",
            dominant_operation_categories=["ConditionalBranching", "DataMovement"], jump_table=True,
            indexed_addr=True, int_consts=consts, imm_values_cnt=n + 2, inferred_algo="ControlFlowDispatch")
    return o0, o3, d


def t_init(r, i):
    words = [r.randrange(0x10000000, 0xFFFFFFFF) for _ in range(r.choice([2, 3, 4]))]
    o0 = ["push rbp", "mov rbp, rsp", "mov [rbp-8], rdi", "mov rax, [rbp-8]", "mov dword ptr [rax], 0",
          "mov rax, [rbp-8]", "mov dword ptr [rax+4], 0"]
    o3 = ["mov qword ptr [rdi], 0"]
    for j, w in enumerate(words):
        o0 += ["mov rax, [rbp-8]", f"mov dword ptr [rax+{8 + 4 * j:X}h], {ida(w)}"]
        o3 += [f"mov dword ptr [rdi+{8 + 4 * j:X}h], {ida(w)}"]
    o0 += ["nop", "pop rbp", "retn"]
    o3 += ["retn"]
    d = doc(in_param_types=["Pointer"], ret_type="None", dominant_operation_categories=["DataMovement", "MemoryAccess"],
            int_consts=sorted(h(w) for w in words), imm_values_cnt=len(words) + 1, mutates_inputs=True,
            inferred_algo="Initialization")
    return o0, o3, d


def t_printf(r, i):
    fmt = "aValueD_%d" % i
    extra = r.choice([1, 2, 3])
    o0 = ["push rbp", "mov rbp, rsp", "sub rsp, 10h", "mov [rbp-4], edi", "mov eax, [rbp-4]",
          f"add eax, {extra}", "mov esi, eax", f"lea rdi, {fmt}", "mov eax, 0", "call _printf",
          "mov rax, cs:stdout", "mov rdi, rax", "call _fflush", "nop", "leave", "retn"]
    o3 = ["sub rsp, 8", f"lea esi, [rdi+{extra}]", f"lea rdi, {fmt}", "xor eax, eax", "call _printf",
          "mov rdi, cs:stdout", "add rsp, 8", "jmp _fflush"]
    consts = [h(extra)] if extra > 1 else []
    d = doc(in_param_types=["Integer"], ret_type="None",
            dominant_operation_categories=["DataMovement", "SubroutineCall"], subcall_targets=2,
            int_consts=consts, imm_values_cnt=2, string_literals=True, io_ops=True,
            inferred_algo="InterfacingWrapper")
    return o0, o3, d


def t_checked_call(r, i):
    code = r.randrange(0x20, 0x7F)
    callee = "sub_%X" % (0x401800 + 0x30 * i)
    o0 = ["push rbp", "mov rbp, rsp", "sub rsp, 20h", "mov [rbp-18h], rdi", "mov rax, [rbp-18h]",
          "mov rdi, rax", f"call {callee}", "mov [rbp-4], eax", "cmp dword ptr [rbp-4], 0", "jns short @L1",
          f"mov edi, {ida(code)}", "call _exit",
          "L1:", "mov eax, [rbp-4]", "leave", "retn"]
    o3 = ["sub rsp, 8", f"call {callee}", "test eax, eax", "js short @L1", "add rsp, 8", "retn",
          "L1:", f"mov edi, {ida(code)}", "call _exit"]
    d = doc(in_param_types=["Pointer"], ret_type="Integer",
            dominant_operation_categories=["ConditionalBranching", "SubroutineCall"], subcall_targets=2,
            int_consts=[h(code)], imm_values_cnt=2, error_handling=True, inferred_algo="ErrorHandling")
    return o0, o3, d


def t_copy(r, i):
    n = r.choice([0x40, 0x80, 0x100, 0x200]) + 8 * i
    o0 = ["push rbp", "mov rbp, rsp", "mov [rbp-8], rdi", "mov [rbp-10h], rsi", "mov rdx, [rbp-10h]",
          "mov rax, [rbp-8]", f"mov ecx, {ida(n)}", "mov rdi, rax", "mov rsi, rdx", "rep movsb", "nop",
          "pop rbp", "retn"]
    o3 = ["movdqu xmm0, xmmword ptr [rsi]", "movups xmmword ptr [rdi], xmm0", f"mov ecx, {ida(n)}",
          "rep movsb", "retn"]
    d = doc(in_param_types=["Pointer", "Pointer"], ret_type="None",
            dominant_operation_categories=["DataMovement", "MemoryAccess"], int_consts=[h(n)], imm_values_cnt=1,
            mutates_inputs=True, block_mem_ops=True, inferred_algo="UtilityHelper")
    return o0, o3, d


def t_popcount(r, i):
    mask = r.choice([0xFF, 0xFFFF, 0x7FFFFFFF, 0x55555555, 0x33333333]) ^ (i << 4)
    o0 = ["push rbp", "mov rbp, rsp", "mov [rbp-14h], edi", f"and dword ptr [rbp-14h], {ida(mask)}",
          "mov dword ptr [rbp-4], 0", "jmp short @L2",
          "L1:", "mov eax, [rbp-14h]", "and eax, 1", "add [rbp-4], eax", "shr dword ptr [rbp-14h], 1",
          "L2:", "cmp dword ptr [rbp-14h], 0", "jnz short @L1", "mov eax, [rbp-4]", "pop rbp", "retn"]
    o3 = [f"and edi, {ida(mask)}", "xor eax, eax", "test edi, edi", "jz short @L2",
          "L1:", "mov edx, edi", "and edx, 1", "add eax, edx", "shr edi, 1", "jnz short @L1",
          "L2:", "retn"]
    d = doc(in_param_types=["Integer"], ret_type="Integer", dominant_operation_categories=["Arithmetic", "Bitwise"],
            loop=True, int_consts=[h(mask)], imm_values_cnt=3, inferred_algo="DataProcessing")
    return o0, o3, d


def t_vector_scale(r, i):
    factor = r.choice(["0.5", "2.0", "1.5", "0.25", "3.0"])
    stride = r.choice([4, 8])
    o0 = ["push rbp", "mov rbp, rsp", "mov [rbp-18h], rdi", "mov [rbp-1Ch], esi", "mov dword ptr [rbp-4], 0",
          "jmp short @L2",
          "L1:", "mov eax, [rbp-4]", "cdqe", f"lea rdx, ds:0[rax*{stride}]", "mov rax, [rbp-18h]",
          "add rax, rdx", "movss xmm0, dword ptr [rax]", f"mulss xmm0, cs:flt_{factor.replace('.', '_')}",
          "movss dword ptr [rax], xmm0", "add dword ptr [rbp-4], 1",
          "L2:", "mov eax, [rbp-4]", "cmp eax, [rbp-1Ch]", "jl short @L1", "nop", "pop rbp", "retn"]
    o3 = ["test esi, esi", "jle short @L2", f"movss xmm1, cs:flt_{factor.replace('.', '_')}",
          f"lea eax, [rsi-1]", f"lea rdx, [rdi+rax*{stride}+{stride}]",
          "L1:", "movss xmm0, dword ptr [rdi]", f"add rdi, {stride}", "mulss xmm0, xmm1",
          f"movss dword ptr [rdi-{stride}], xmm0", "cmp rdi, rdx", "jnz short @L1",
          "L2:", "retn"]
    d = doc(in_param_types=["Pointer", "Integer"], ret_type="None",
            dominant_operation_categories=["Arithmetic", "MemoryAccess"], loop=True, indexed_addr=True, simd=True,
            int_consts=[h(stride)] if stride > 1 else [], float_consts=[factor], imm_values_cnt=3,
            mutates_inputs=True, inferred_algo="DataProcessing")
    return o0, o3, d


def t_global_counter(r, i):
    step = r.randrange(2, 0x40)
    var = "dword_%X" % (0x604000 + 4 * i)
    o0 = ["push rbp", "mov rbp, rsp", f"mov eax, cs:{var}", f"add eax, {ida(step)}", f"mov cs:{var}, eax",
          f"mov eax, cs:{var}", "pop rbp", "retn"]
    o3 = [f"mov eax, cs:{var}", f"add eax, {ida(step)}", f"mov cs:{var}, eax", "retn"]
    d = doc(ret_type="Integer", dominant_operation_categories=["Arithmetic", "DataMovement"],
            int_consts=[h(step)], imm_values_cnt=1, mutates_globals=True, inferred_algo="UtilityHelper")
    return o0, o3, d


TEMPLATES = [
    ("checksum", t_checksum), ("fnv_hash", t_fnv), ("alloc_header", t_alloc), ("sys_call", t_syscall),
    ("dispatch", t_dispatch), ("ctx_init", t_init), ("log_value", t_printf), ("checked_call", t_checked_call),
    ("block_copy", t_copy), ("bit_count", t_popcount), ("vec_scale", t_vector_scale),
    ("bump_counter", t_global_counter),
]
PER_TEMPLATE = 5


def assemble(lines, base):
    """Assigns addresses (4 bytes per instruction) and resolves labels."""
    addrs, pos = {}, base
    for ln in lines:
        if ln.endswith(":") and ln[:-1].startswith("L"):
            addrs[ln[:-1]] = pos
        else:
            pos += 4
    out, pos = [], base
    for ln in lines:
        if ln.endswith(":") and ln[:-1].startswith("L"):
            continue
        for label, a in addrs.items():
            ln = ln.replace("@" + label, "loc_%X" % a)
        out.append("%x: %s" % (pos, ln))
        pos += 4
    return out


ALT_ALGO = {
    "DataProcessing": "UtilityHelper",
    "CryptographicHashing": "DataProcessing",
    "MemoryManagement": "InterfacingWrapper",
    "SystemOsInteraction": "InterfacingWrapper",
    "ControlFlowDispatch": "UtilityHelper",
    "Initialization": "Undetermined",
    "InterfacingWrapper": "UtilityHelper",
    "ErrorHandling": "InterfacingWrapper",
    "UtilityHelper": "Undetermined",
}
CATEGORIES = ["Arithmetic", "Bitwise", "DataMovement", "ConditionalBranching", "SubroutineCall", "MemoryAccess"]


def perturb(d, r, strength):
    d = json.loads(json.dumps(d))
    if r.random() < 0.5 * strength:
        d["imm_values_cnt"] = max(0, d["imm_values_cnt"] + r.choice([-2, -1, 1, 2]))
    if r.random() < 0.35 * strength:
        cats = set(d["dominant_operation_categories"])
        extra = r.choice(CATEGORIES)
        if extra in cats and len(cats) > 1:
            cats.discard(extra)
        else:
            cats.add(extra)
        d["dominant_operation_categories"] = [c for c in CATEGORIES if c in cats]
    if r.random() < 0.2 * strength:
        d["inferred_algo"] = ALT_ALGO.get(d["inferred_algo"], "Undetermined")
    if r.random() < 0.15 * strength and d["int_consts"]:
        d["int_consts"] = d["int_consts"][1:]
    if r.random() < 0.1 * strength:
        d["error_handling"] = not d["error_handling"]
    return d


def render(d, r):
    """Raw response text: key order shuffled, sometimes fenced, hex casing varied."""
    items = list(d.items())
    r.shuffle(items)
    out = {}
    for k, v in items:
        if k == "int_consts":
            v = [x.upper().replace("0X", "0x") if r.random() < 0.3 else x for x in v]
        out[k] = v
    text = json.dumps(out, indent=r.choice([None, 2]))
    if r.random() < 0.3:
        text = "```json\n" + text + "\n```"
    return text


def bad_response(d, r):
    kind = r.choice(["prose", "truncated", "enum", "count"])
    if kind == "prose":
        return "Here is the analysis of the function:\n" + json.dumps(d)
    if kind == "truncated":
        return json.dumps(d)[: r.randrange(20, 120)]
    if kind == "enum":
        bad = dict(d, ret_type="void*")
        return json.dumps(bad)
    bad = dict(d, in_param_types=d["in_param_types"] + ["Integer"])
    return json.dumps(bad)


def main():
    r = random.Random(SEED)
    listings = {"O0": [], "O3": []}
    responses, embeddings = [], []
    tdim = len(TEMPLATES)
    base = {"O0": 0x401000, "O3": 0x801000}
    for t_idx, (name, fn) in enumerate(TEMPLATES):
        for i in range(PER_TEMPLATE):
            sym = "%s_%d" % (name, i)
            o0, o3, ref = fn(r, i)
            proto = [r.gauss(0, 1) for _ in range(16)]
            proto[t_idx % 16] += 3.0
            for opt, lines, strength in (("O0", o0, 1.0), ("O3", o3, 1.6)):
                listings[opt].append("; FUNCTION %s" % sym)
                listings[opt].extend(assemble(lines, base[opt]))
                listings[opt].append("")
                base[opt] += 0x400
                fid = "%s/x86-64/%s/%s" % (LIBRARY, opt, sym)
                seen = perturb(ref, r, strength)
                attempts = []
                roll = r.random()
                if roll < 0.12:
                    attempts.append(bad_response(seen, r))
                if roll < 0.03:
                    attempts.append(bad_response(seen, r))
                attempts.append(render(seen, r))
                responses.append({"id": fid, "responses": attempts})
                vec = [round(p + r.gauss(0, 0.6), 6) for p in proto]
                embeddings.append({"id": fid, "values": vec})
        # Short stubs that ingestion drops (fewer than three instructions).
    listings["O0"] += ["; FUNCTION nullsub_1", "%x: retn" % base["O0"], ""]
    listings["O3"] += ["; FUNCTION nullsub_1", "%x: retn" % base["O3"], ""]

    (OUT / "listings").mkdir(exist_ok=True)
    for opt, lines in listings.items():
        header = "; minilib, x86-64 %s\n" % opt
        (OUT / "listings" / ("minilib_%s.asm" % opt.lower())).write_text(header + "\n".join(lines))
    with open(OUT / "responses.jsonl", "w") as f:
        for rec in responses:
            f.write(json.dumps(rec) + "\n")
    with open(OUT / "embeddings.jsonl", "w") as f:
        for rec in embeddings:
            f.write(json.dumps(rec) + "\n")


if __name__ == "__main__":
    main()
