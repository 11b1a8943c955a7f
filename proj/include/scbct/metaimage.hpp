#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "scbct/volume.hpp"

namespace scbct {

// Single-file MetaImage (.mha) I/O, LOCAL raw payload, little-endian,
// x-fastest. Volumes are MET_FLOAT, masks MET_UCHAR.

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void swap_bytes(char* p, std::size_t elem_size, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i)
        std::reverse(p + i * elem_size, p + (i + 1) * elem_size);
}

struct MetaHeader {
    Grid3 grid;
    std::string element_type;
    bool msb = false;
};

inline MetaHeader parse_meta_header(std::istream& in, const std::string& path) {
    MetaHeader h;
    bool saw_dims = false, saw_type = false, saw_datafile = false;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("read_metaimage: malformed header line in " + path);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        std::istringstream vs(val);
        if (key == "ObjectType") {
            if (val != "Image")
                throw std::runtime_error("read_metaimage: unsupported ObjectType " + val);
        } else if (key == "NDims") {
            if (val != "3") throw std::runtime_error("read_metaimage: NDims must be 3");
        } else if (key == "BinaryData") {
            if (val != "True")
                throw std::runtime_error("read_metaimage: only binary data supported");
        } else if (key == "CompressedData") {
            if (val == "True")
                throw std::runtime_error("read_metaimage: compressed data not supported");
        } else if (key == "BinaryDataByteOrderMSB" || key == "ElementByteOrderMSB") {
            h.msb = (val == "True");
        } else if (key == "DimSize") {
            if (!(vs >> h.grid.dims[0] >> h.grid.dims[1] >> h.grid.dims[2]))
                throw std::runtime_error("read_metaimage: bad DimSize");
            saw_dims = true;
        } else if (key == "ElementSpacing") {
            if (!(vs >> h.grid.spacing[0] >> h.grid.spacing[1] >> h.grid.spacing[2]))
                throw std::runtime_error("read_metaimage: bad ElementSpacing");
        } else if (key == "Offset" || key == "Position" || key == "Origin") {
            if (!(vs >> h.grid.origin[0] >> h.grid.origin[1] >> h.grid.origin[2]))
                throw std::runtime_error("read_metaimage: bad Offset");
        } else if (key == "ElementType") {
            h.element_type = val;
            saw_type = true;
        } else if (key == "ElementDataFile") {
            if (val != "LOCAL")
                throw std::runtime_error(
                    "read_metaimage: only ElementDataFile = LOCAL supported");
            saw_datafile = true;
            break;
        }
        // other keys (TransformMatrix etc.) are tolerated and ignored
    }
    if (!saw_dims || !saw_type || !saw_datafile)
        throw std::runtime_error("read_metaimage: incomplete header in " + path);
    h.grid.validate();
    return h;
}

inline std::vector<char> read_payload(std::istream& in, const MetaHeader& h,
                                      std::size_t elem_size, const std::string& path) {
    const std::size_t count = h.grid.voxel_count();
    std::vector<char> bytes(count * elem_size);
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size())
        throw std::runtime_error("read_metaimage: element count mismatch in " + path);
    in.peek();
    if (!in.eof())
        throw std::runtime_error("read_metaimage: element count mismatch in " + path);
    if (h.msb != (std::endian::native == std::endian::big))
        swap_bytes(bytes.data(), elem_size, count);
    return bytes;
}

inline void write_header(std::ostream& out, const Grid3& g, const char* element_type) {
    out << "ObjectType = Image\n"
        << "NDims = 3\n"
        << "BinaryData = True\n"
        << "BinaryDataByteOrderMSB = "
        << ((std::endian::native == std::endian::big) ? "True" : "False") << "\n"
        << "DimSize = " << g.dims[0] << " " << g.dims[1] << " " << g.dims[2] << "\n"
        << "ElementSpacing = " << fmt_double(g.spacing[0]) << " " << fmt_double(g.spacing[1])
        << " " << fmt_double(g.spacing[2]) << "\n"
        << "Offset = " << fmt_double(g.origin[0]) << " " << fmt_double(g.origin[1]) << " "
        << fmt_double(g.origin[2]) << "\n"
        << "ElementType = " << element_type << "\n"
        << "ElementDataFile = LOCAL\n";
}

// Write-temp-then-rename so readers never observe a partial file.
template <typename WriteBody>
void atomic_write(const std::filesystem::path& path, WriteBody&& body) {
    const auto parent = path.parent_path();
    if (!parent.empty() && !std::filesystem::exists(parent))
        throw std::runtime_error("write_metaimage: parent directory does not exist: " +
                                 parent.string());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("write_metaimage: cannot open " + tmp.string());
        body(out);
        out.flush();
        if (!out) throw std::runtime_error("write_metaimage: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline Volume3 read_volume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_metaimage: cannot open " + path.string());
    const auto h = detail::parse_meta_header(in, path.string());
    Volume3 vol;
    vol.grid = h.grid;
    const std::size_t count = h.grid.voxel_count();
    vol.values.resize(count);
    if (h.element_type == "MET_FLOAT") {
        const auto bytes = detail::read_payload(in, h, sizeof(float), path.string());
        std::memcpy(vol.values.data(), bytes.data(), bytes.size());
    } else if (h.element_type == "MET_UCHAR") {
        const auto bytes = detail::read_payload(in, h, 1, path.string());
        for (std::size_t i = 0; i < count; ++i)
            vol.values[i] = static_cast<float>(static_cast<std::uint8_t>(bytes[i]));
    } else {
        throw std::runtime_error("read_metaimage: unsupported ElementType " + h.element_type);
    }
    return vol;
}

inline Mask3 read_mask(const std::filesystem::path& path) {
    const Volume3 vol = read_volume(path);
    Mask3 mask;
    mask.grid = vol.grid;
    mask.values.resize(vol.values.size());
    for (std::size_t i = 0; i < vol.values.size(); ++i) {
        const float v = vol.values[i];
        if (v != 0.0f && v != 1.0f)
            throw std::runtime_error("read_metaimage: non-binary data requested as mask: " +
                                     path.string());
        mask.values[i] = static_cast<std::uint8_t>(v);
    }
    return mask;
}

inline void write_metaimage(const Volume3& vol, const std::filesystem::path& path) {
    vol.grid.validate();
    if (vol.values.size() != vol.grid.voxel_count())
        throw std::invalid_argument("write_metaimage: value count does not match dims");
    detail::atomic_write(path, [&](std::ostream& out) {
        detail::write_header(out, vol.grid, "MET_FLOAT");
        out.write(reinterpret_cast<const char*>(vol.values.data()),
                  static_cast<std::streamsize>(vol.values.size() * sizeof(float)));
    });
}

inline void write_metaimage(const Mask3& mask, const std::filesystem::path& path) {
    mask.validate();
    detail::atomic_write(path, [&](std::ostream& out) {
        detail::write_header(out, mask.grid, "MET_UCHAR");
        out.write(reinterpret_cast<const char*>(mask.values.data()),
                  static_cast<std::streamsize>(mask.values.size()));
    });
}

}  // namespace scbct
