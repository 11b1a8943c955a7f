#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <scbct/geometry.hpp>
#include <scbct/metaimage.hpp>

#include "oracles.hpp"

using namespace scbct;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "scbct_mha_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

void write_raw(const fs::path& p, const std::string& header,
               const std::vector<float>& payload) {
    std::ofstream out(p, std::ios::binary);
    out << header;
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
}

std::string float_header(std::array<int, 3> dims) {
    std::string h;
    h += "ObjectType = Image\nNDims = 3\nBinaryData = True\n";
    h += "BinaryDataByteOrderMSB = False\n";
    h += "DimSize = " + std::to_string(dims[0]) + " " + std::to_string(dims[1]) + " " +
         std::to_string(dims[2]) + "\n";
    h += "ElementSpacing = 1 1 1\nOffset = 0 0 0\n";
    h += "ElementType = MET_FLOAT\nElementDataFile = LOCAL\n";
    return h;
}

}  // namespace

TEST_CASE("volume round trip is bitwise exact over random volumes") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dim(1, 9);
    for (int trial = 0; trial < 100; ++trial) {
        Grid3 g;
        g.dims = {dim(rng), dim(rng), dim(rng)};
        g.spacing = {0.5 + 0.01 * trial, 1.0, 2.0 / 3.0};
        g.origin = {-3.25, 0.0, 1e-4 * trial};
        const Volume3 v = oracle::random_volume(g, 5000 + trial, -10.0f, 10.0f);
        const fs::path p = temp_dir() / ("rt" + std::to_string(trial) + ".mha");
        write_metaimage(v, p);
        const Volume3 r = read_volume(p);
        REQUIRE(r.grid.dims == g.dims);
        REQUIRE(r.grid.same_as(g, 1e-15));
        REQUIRE(r.values == v.values);
    }
}

TEST_CASE("mask round trip preserves every voxel") {
    const Grid3 g{{7, 6, 5}, {1, 1, 1}, {0, 0, 0}};
    const Mask3 m = oracle::random_mask(g, 17, 0.4);
    const fs::path p = temp_dir() / "mask.mha";
    write_metaimage(m, p);
    const Mask3 r = read_mask(p);
    REQUIRE(r.values == m.values);
    REQUIRE(r.grid.same_as(g));
}

TEST_CASE("written header bytes follow the documented layout") {
    Grid3 g;
    g.dims = {4, 3, 2};
    g.spacing = {1.5, 2.0, 2.5};
    g.origin = {-1.0, 0.5, 3.0};
    Volume3 v = Volume3::zeros(g);
    const fs::path p = temp_dir() / "hdr.mha";
    write_metaimage(v, p);

    std::ifstream in(p, std::ios::binary);
    std::string contents((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
    const std::string expected =
        "ObjectType = Image\n"
        "NDims = 3\n"
        "BinaryData = True\n"
        "BinaryDataByteOrderMSB = False\n"
        "DimSize = 4 3 2\n"
        "ElementSpacing = 1.5 2 2.5\n"
        "Offset = -1 0.5 3\n"
        "ElementType = MET_FLOAT\n"
        "ElementDataFile = LOCAL\n";
    REQUIRE(contents.substr(0, expected.size()) == expected);
    REQUIRE(contents.size() == expected.size() + 24 * sizeof(float));
}

TEST_CASE("element count mismatch is detected in both directions") {
    const fs::path p = temp_dir() / "short.mha";
    write_raw(p, float_header({4, 4, 4}), std::vector<float>(63, 1.0f));
    REQUIRE_THROWS_WITH(read_volume(p),
                        Catch::Matchers::ContainsSubstring("element count mismatch"));

    const fs::path q = temp_dir() / "long.mha";
    write_raw(q, float_header({4, 4, 4}), std::vector<float>(65, 1.0f));
    REQUIRE_THROWS_WITH(read_volume(q),
                        Catch::Matchers::ContainsSubstring("element count mismatch"));
}

TEST_CASE("non-binary data is rejected when requested as a mask") {
    const Grid3 g{{3, 3, 3}, {1, 1, 1}, {0, 0, 0}};
    Volume3 v = Volume3::filled(g, 1.0f);
    v.values[4] = 0.5f;
    const fs::path p = temp_dir() / "notmask.mha";
    write_metaimage(v, p);
    REQUIRE_THROWS_WITH(read_mask(p),
                        Catch::Matchers::ContainsSubstring("non-binary data requested as mask"));
    REQUIRE_NOTHROW(read_volume(p));
}

TEST_CASE("unsupported element types and malformed headers are rejected") {
    const fs::path p = temp_dir() / "short_type.mha";
    {
        std::ofstream out(p, std::ios::binary);
        out << "ObjectType = Image\nNDims = 3\nBinaryData = True\n"
               "BinaryDataByteOrderMSB = False\nDimSize = 1 1 1\n"
               "ElementSpacing = 1 1 1\nOffset = 0 0 0\n"
               "ElementType = MET_SHORT\nElementDataFile = LOCAL\n";
        const std::int16_t x = 3;
        out.write(reinterpret_cast<const char*>(&x), 2);
    }
    REQUIRE_THROWS_WITH(read_volume(p),
                        Catch::Matchers::ContainsSubstring("unsupported ElementType"));

    const fs::path q = temp_dir() / "garbled.mha";
    {
        std::ofstream out(q, std::ios::binary);
        out << "ObjectType = Image\nNDims 3\n";
    }
    REQUIRE_THROWS_WITH(read_volume(q),
                        Catch::Matchers::ContainsSubstring("malformed header"));

    const fs::path r = temp_dir() / "truncated.mha";
    {
        std::ofstream out(r, std::ios::binary);
        out << "ObjectType = Image\nNDims = 3\n";
    }
    REQUIRE_THROWS_WITH(read_volume(r),
                        Catch::Matchers::ContainsSubstring("incomplete header"));

    REQUIRE_THROWS_WITH(read_volume(temp_dir() / "missing.mha"),
                        Catch::Matchers::ContainsSubstring("cannot open"));
}

TEST_CASE("compressed payloads are rejected") {
    const fs::path p = temp_dir() / "compressed.mha";
    {
        std::ofstream out(p, std::ios::binary);
        out << "ObjectType = Image\nNDims = 3\nBinaryData = True\n"
               "CompressedData = True\n"
               "BinaryDataByteOrderMSB = False\nDimSize = 1 1 1\n"
               "ElementSpacing = 1 1 1\nOffset = 0 0 0\n"
               "ElementType = MET_FLOAT\nElementDataFile = LOCAL\n";
    }
    REQUIRE_THROWS_WITH(read_volume(p),
                        Catch::Matchers::ContainsSubstring("compressed data not supported"));
}

TEST_CASE("headers with CRLF endings and unknown keys still parse") {
    const fs::path p = temp_dir() / "crlf.mha";
    {
        std::ofstream out(p, std::ios::binary);
        out << "ObjectType = Image\r\nNDims = 3\r\nBinaryData = True\r\n"
               "BinaryDataByteOrderMSB = False\r\n"
               "TransformMatrix = 1 0 0 0 1 0 0 0 1\r\n"
               "DimSize = 2 1 1\r\n"
               "ElementSpacing = 1 1 1\r\nOffset = 0 0 0\r\n"
               "ElementType = MET_FLOAT\r\nElementDataFile = LOCAL\r\n";
        const float payload[2] = {1.25f, -2.5f};
        out.write(reinterpret_cast<const char*>(payload), sizeof(payload));
    }
    const Volume3 v = read_volume(p);
    REQUIRE(v.values == std::vector<float>{1.25f, -2.5f});
}

TEST_CASE("big-endian payloads are byte-swapped on read") {
    const fs::path p = temp_dir() / "msb.mha";
    {
        std::ofstream out(p, std::ios::binary);
        out << "ObjectType = Image\nNDims = 3\nBinaryData = True\n"
               "BinaryDataByteOrderMSB = True\nDimSize = 1 1 1\n"
               "ElementSpacing = 1 1 1\nOffset = 0 0 0\n"
               "ElementType = MET_FLOAT\nElementDataFile = LOCAL\n";
        const float x = 1.25f;
        char bytes[4];
        std::memcpy(bytes, &x, 4);
        std::swap(bytes[0], bytes[3]);
        std::swap(bytes[1], bytes[2]);
        out.write(bytes, 4);
    }
    const Volume3 v = read_volume(p);
    REQUIRE(v.values[0] == 1.25f);
}

TEST_CASE("writes refuse a missing parent directory and leave no temp files") {
    const Grid3 g{{2, 2, 2}, {1, 1, 1}, {0, 0, 0}};
    const Volume3 v = Volume3::filled(g, 1.0f);
    REQUIRE_THROWS_WITH(write_metaimage(v, temp_dir() / "no_such_dir" / "v.mha"),
                        Catch::Matchers::ContainsSubstring("parent directory does not exist"));

    const fs::path p = temp_dir() / "clean.mha";
    write_metaimage(v, p);
    REQUIRE(fs::exists(p));
    REQUIRE_FALSE(fs::exists(p.string() + ".tmp"));
}

TEST_CASE("projection stacks round trip and validate their shape") {
    ConeBeamGeometry geom = desk_geometry(4);
    geom.det_rows = 6;
    geom.det_cols = 5;
    ProjectionSet p = ProjectionSet::zeros(geom);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> dist(0.0f, 50.0f);
    for (auto& x : p.data) x = dist(rng);

    const fs::path path = temp_dir() / "proj.mha";
    write_projections(p, path);
    const ProjectionSet r = read_projections(path, geom);
    REQUIRE(r.data == p.data);

    ConeBeamGeometry wrong = geom;
    wrong.angles = uniform_angles(5);
    REQUIRE_THROWS_WITH(read_projections(path, wrong),
                        Catch::Matchers::ContainsSubstring("does not match geometry"));
}
