// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <random>

#include "catch_amalgamated.hpp"
#include "kdisagg/io.hpp"
#include "kdisagg/kir.hpp"
#include "support/random_kernel.hpp"

using namespace kdisagg;

namespace {

std::string data(const std::string& rel) {
  return read_text_file(std::filesystem::path(KDISAGG_TEST_DATA) / rel);
}

}  // namespace

TEST_CASE("doubler kernel has one 4-byte global load", "[kir]") {
  KernelIR k = parse_kernel(data("kir/doubler.kir"));
  CHECK(k.name == "opaque_kernel");
  REQUIRE(k.params.size() == 3);
  CHECK(k.params[0].kind == ParamKind::buffer_handle);
  CHECK(k.params[2].kind == ParamKind::scalar);

  std::vector<const Instruction*> loads;
  for (const auto& i : k.instructions)
    if (i.opcode == Opcode::load_global) loads.push_back(&i);
  REQUIRE(loads.size() == 1);
  CHECK(loads[0]->mnemonic == "ld.global.f32");
  CHECK(loads[0]->access_width == 4);
  CHECK(loads[0]->roots == std::set<std::string>{"in"});
  CHECK(k.memory_instruction_count() == 2);
}

TEST_CASE("empty body yields zero instructions", "[kir]") {
  KernelIR k = parse_kernel(data("kir/empty_body.kir"));
  CHECK(k.instructions.empty());
  CHECK(k.body.empty());
  CHECK(k.name == "noop");
}

TEST_CASE("three-instruction kernel matches its golden print", "[kir]") {
  const std::string golden =
      ".visible .entry three(\n"
      "    .param .u64 a\n"
      ")\n"
      "{\n"
      "    ld.global.f32 %f1, [a];\n"
      "    add.f32 %f2, %f1, %f1;\n"
      "    st.global.f32 [a+4], %f2;\n"
      "}\n";
  KernelIR k = parse_kernel(golden);
  REQUIRE(k.instructions.size() == 3);
  CHECK(k.instructions[0].opcode == Opcode::load_global);
  CHECK(k.instructions[1].opcode == Opcode::other);
  CHECK(k.instructions[2].opcode == Opcode::store_global);
  CHECK(k.instructions[2].address->offset == 4);
  CHECK(k.memory_instruction_count() == 2);
  CHECK(print_kernel(k) == golden);
}

TEST_CASE("opcode classification and widths", "[kir]") {
  KernelIR k = parse_kernel(data("kir/vec4_load.kir"));
  std::vector<unsigned> widths;
  for (const auto& i : k.instructions)
    if (is_memory(i.opcode)) widths.push_back(i.access_width);
  CHECK(widths == std::vector<unsigned>{16, 16});

  KernelIR h = parse_kernel(data("kir/histogram.kir"));
  int atomics = 0;
  for (const auto& i : h.instructions)
    if (i.opcode == Opcode::atomic_global) {
      ++atomics;
      CHECK(access_class(i.opcode) == AccessClass::read_write);
      CHECK(i.access_width == 4);
    }
  CHECK(atomics == 1);
}

TEST_CASE("derivation chain records the root parameters", "[kir]") {
  KernelIR k = parse_kernel(data("kir/histogram.kir"));
  const Instruction* atom = nullptr;
  for (const auto& i : k.instructions)
    if (i.opcode == Opcode::atomic_global) atom = &i;
  REQUIRE(atom);
  // bins plus an index loaded from data
  CHECK(atom->roots == std::set<std::string>{"bins", "data"});
}

TEST_CASE("parse errors carry line and column", "[kir][errors]") {
  SECTION("duplicate parameter") {
    try {
      parse_kernel(".entry k(\n    .param .u64 a,\n    .param .u32 a\n)\n{\n}\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
      CHECK(e.column() == 17);
      CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
    }
  }
  SECTION("unparsable memory width") {
    try {
      parse_kernel(".entry k(\n    .param .u64 a\n)\n{\n    ld.global.weird %f1, [a];\n}\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 5);
      CHECK(std::string(e.what()).find("width") != std::string::npos);
    }
  }
  SECTION("64-byte vector access is not a valid width") {
    CHECK_THROWS_AS(
        parse_kernel(".entry k(\n    .param .u64 a\n)\n{\n    ld.global.v4.f64 {%a,%b,%c,%d}, [a];\n}\n"),
        ParseError);
  }
  SECTION("missing semicolon") {
    try {
      parse_kernel(".entry k()\n{\n    ret\n}\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }
  SECTION("missing closing brace") {
    CHECK_THROWS_AS(parse_kernel(".entry k()\n{\n    ret;\n"), ParseError);
  }
  SECTION("missing entry") {
    CHECK_THROWS_AS(parse_kernel("// nothing here\n"), ParseError);
  }
  SECTION("address not derived from a buffer parameter") {
    CHECK_THROWS_AS(parse_kernel(".entry t(\n    .param .u64 a\n)\n{\n    ld.global.f32 %f1, [%rd9];\n}\n"),
                    ParseError);
  }
  SECTION("malformed address") {
    CHECK_THROWS_AS(parse_kernel(".entry k(\n    .param .u64 a\n)\n{\n    ld.global.f32 %f1, [a+zz];\n}\n"),
                    ParseError);
  }
}

TEST_CASE("unknown opcodes become other", "[kir]") {
  KernelIR k = parse_kernel(".entry k(\n    .param .u64 a\n)\n{\n    tex.2d.v4.f32 %f1, [a];\n    ld.shared.f32 %f2, [%s];\n}\n");
  REQUIRE(k.instructions.size() == 2);
  CHECK(k.instructions[0].opcode == Opcode::other);
  CHECK(k.instructions[1].opcode == Opcode::other);
}

TEST_CASE("print then parse is the identity on the corpus", "[kir][property]") {
  for (const auto& entry : std::filesystem::directory_iterator(std::filesystem::path(KDISAGG_TEST_DATA) / "kir")) {
    if (entry.path().extension() != ".kir" || entry.path().stem().extension() == ".inst") continue;
    KernelIR k = parse_kernel(read_text_file(entry.path()));
    const std::string printed = print_kernel(k);
    KernelIR again = parse_kernel(printed);
    CHECK(print_kernel(again) == printed);
    CHECK(again.instructions.size() == k.instructions.size());
  }
}

TEST_CASE("random kernels round-trip through the printer", "[kir][property]") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::string text = testing::random_kernel_text(rng);
    KernelIR k = parse_kernel(text);
    KernelIR again = parse_kernel(print_kernel(k));
    REQUIRE(again.instructions.size() == k.instructions.size());
    for (std::size_t i = 0; i < k.instructions.size(); ++i) {
      CHECK(again.instructions[i].opcode == k.instructions[i].opcode);
      CHECK(again.instructions[i].access_width == k.instructions[i].access_width);
      CHECK(again.instructions[i].index == i);
    }
  }
}
