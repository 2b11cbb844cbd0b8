#include "oracles.hpp"

#include "triage/binscan.hpp"
#include "triage/error.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace triage;
using namespace triage::binscan;

namespace {

std::vector<ImportEntry> imports_of(const nlohmann::json& j) {
    std::vector<ImportEntry> out;
    for (const auto& e : j) {
        ImportEntry ie{e.at("library").get<std::string>(), {}};
        for (const auto& f : e.at("functions")) {
            if (f.is_number()) ie.functions.push_back("ord" + std::to_string(f.get<int>()));
            else if (f.get<std::string>().rfind('#', 0) == 0) ie.functions.push_back("ord" + f.get<std::string>().substr(1));
            else ie.functions.push_back(f.get<std::string>());
        }
        out.push_back(ie);
    }
    return out;
}

}  // namespace

TEST(Binscan, DetectsFileTypes) {
    std::vector<std::uint8_t> mz = {'M', 'Z', 0, 0};
    std::vector<std::uint8_t> elf = {0x7f, 'E', 'L', 'F', 2, 1};
    std::vector<std::uint8_t> text = {'h', 'e', 'l', 'l', 'o'};
    EXPECT_EQ(detect_file_type(elf), FileType::Elf);
    EXPECT_EQ(detect_file_type(text), FileType::Unknown);
    EXPECT_EQ(detect_file_type(Bytes{}), FileType::Unknown);
    auto pe = oracle::read_bytes(oracle::fixture_dir() / "samples/zbot.exe");
    EXPECT_EQ(detect_file_type(pe), FileType::PeExecutable);
    (void)mz;
}

TEST(Binscan, SizeClassBoundaries) {
    EXPECT_EQ(size_class(0), SizeClass::Small);
    EXPECT_EQ(size_class(51'200), SizeClass::Small);
    EXPECT_EQ(size_class(kSmallLimit), SizeClass::Small);
    EXPECT_EQ(size_class(kSmallLimit + 1), SizeClass::Medium);
    EXPECT_EQ(size_class(kMediumLimit), SizeClass::Medium);
    EXPECT_EQ(size_class(kMediumLimit + 1), SizeClass::Large);
    EXPECT_EQ(size_class(kLargeLimit), SizeClass::Large);
    EXPECT_EQ(size_class(kLargeLimit + 1), SizeClass::Oversize);
}

TEST(Binscan, ByteEntropyAgainstHistogram) {
    EXPECT_THROW(byte_entropy(Bytes{}), Error);
    std::vector<std::uint8_t> same(100, 7);
    EXPECT_DOUBLE_EQ(byte_entropy(same), 0.0);
    std::vector<std::uint8_t> all(256 * 4);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint8_t>(i);
    EXPECT_NEAR(byte_entropy(all), 8.0, 1e-12);

    auto pe = oracle::read_bytes(oracle::fixture_dir() / "samples/gandcrab.exe");
    std::vector<std::uint64_t> hist(256, 0);
    for (auto b : pe) hist[b]++;
    hist.erase(std::remove(hist.begin(), hist.end(), 0u), hist.end());
    EXPECT_NEAR(byte_entropy(pe), oracle::entropy_bits(hist), 1e-9);
}

TEST(Binscan, ParsesEveryFixtureSample) {
    for (const auto& s : oracle::manifest()) {
        auto bytes = oracle::read_bytes(oracle::fixture_dir() / s["file"].get<std::string>());
        auto pe = parse_pe(bytes);
        SCOPED_TRACE(s["name"].get<std::string>());
        EXPECT_EQ(pe.size_bytes, bytes.size());
        EXPECT_EQ(pe.size_bytes, s["size_bytes"].get<std::uint64_t>());
        EXPECT_EQ(std::string(to_string(pe.architecture)), s["architecture"].get<std::string>());
        ASSERT_TRUE(pe.imphash.has_value());
        EXPECT_EQ(*pe.imphash, s["imphash"].get<std::string>());
        EXPECT_EQ(imphash_input(pe.imports), s["imphash_input"].get<std::string>());
        for (const auto& sec : pe.sections) {
            EXPECT_GE(sec.entropy, 0.0);
            EXPECT_LE(sec.entropy, 8.0);
        }
        EXPECT_FALSE(pe.strings.empty());
    }
}

TEST(Binscan, TruncatedHeadersAreMalformed) {
    auto bytes = oracle::read_bytes(oracle::fixture_dir() / "samples/zbot.exe");
    for (std::size_t cut : {2u, 64u, 100u, 300u}) {
        std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + cut);
        try {
            parse_pe(part);
            ADD_FAILURE() << "no throw at " << cut;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::MalformedHeader);
        }
    }
}

TEST(Binscan, ImphashMatchesIndependentMd5) {
    for (const auto& s : oracle::manifest()) {
        auto imports = imports_of(s["imports"]);
        std::string expected_input = oracle::imphash_string(s["imports"]);
        EXPECT_EQ(imphash_input(imports), expected_input);
        EXPECT_EQ(compute_imphash(imports), oracle::md5_hex(expected_input));
    }
}

TEST(Binscan, ImphashNormalization) {
    std::vector<ImportEntry> a = {{"KERNEL32.DLL", {"CreateFileW", "ReadFile"}}, {"ws2_32.dll", {"ord115"}}};
    std::vector<ImportEntry> b = {{"kernel32", {"createfilew", "readfile"}}, {"WS2_32", {"ord115"}}};
    EXPECT_EQ(imphash_input(a), "kernel32.createfilew,kernel32.readfile,ws2_32.ord115");
    EXPECT_EQ(compute_imphash(a), compute_imphash(b));

    std::vector<ImportEntry> drv = {{"ntoskrnl.SYS", {"IoCreateDevice"}}, {"comctl.ocx", {"Init"}}};
    EXPECT_EQ(imphash_input(drv), "ntoskrnl.iocreatedevice,comctl.init");
    std::vector<ImportEntry> exe = {{"helper.exe", {"Run"}}};
    EXPECT_EQ(imphash_input(exe), "helper.exe.run");

    std::vector<ImportEntry> swapped = {{"KERNEL32.DLL", {"ReadFile", "CreateFileW"}}, {"ws2_32.dll", {"ord115"}}};
    EXPECT_NE(compute_imphash(a), compute_imphash(swapped));

    std::vector<ImportEntry> none = {{"kernel32.dll", {}}};
    try {
        compute_imphash(none);
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyImports);
    }
}

TEST(Binscan, ExtractsAsciiAndUtf16Strings) {
    std::string ascii = "\x01\x02hello world\x00abc\x00";
    std::vector<std::uint8_t> bytes(ascii.begin(), ascii.end());
    for (char c : std::string("secret")) {
        bytes.push_back(static_cast<std::uint8_t>(c));
        bytes.push_back(0);
    }
    bytes.push_back(0);
    bytes.push_back(0);
    auto strings = extract_strings(bytes);
    EXPECT_NE(std::find(strings.begin(), strings.end(), "hello world"), strings.end());
    EXPECT_NE(std::find(strings.begin(), strings.end(), "secret"), strings.end());
    EXPECT_EQ(std::find(strings.begin(), strings.end(), "abc"), strings.end());
}

TEST(Binscan, JsonRoundTrip) {
    auto bytes = oracle::read_bytes(oracle::fixture_dir() / "samples/asyncrat.exe");
    auto pe = parse_pe(bytes);
    auto back = pe_from_json(to_json(pe));
    EXPECT_EQ(to_json(back), to_json(pe));
}
