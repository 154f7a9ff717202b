#include "relict/raster/raster_io.hpp"

#include <tiffio.h>

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>

#include "relict/core/error.hpp"

namespace relict::raster {

namespace fs = std::filesystem;

namespace {

constexpr ttag_t kModelPixelScale = 33550;
constexpr ttag_t kModelTiepoint = 33922;
constexpr ttag_t kGeoKeyDirectory = 34735;
constexpr ttag_t kGdalMetadata = 42112;
constexpr ttag_t kGdalNodata = 42113;

constexpr std::uint16_t kGtModelType = 1024;
constexpr std::uint16_t kGtRasterType = 1025;
constexpr std::uint16_t kGeographicType = 2048;
constexpr std::uint16_t kProjectedCsType = 3072;

TIFFExtendProc g_parent_extender = nullptr;

void register_geotiff_tags(TIFF* tif) {
  static const TIFFFieldInfo fields[] = {
      {kModelPixelScale, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char*>("ModelPixelScale")},
      {kModelTiepoint, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char*>("ModelTiepoint")},
      {kGeoKeyDirectory, -1, -1, TIFF_SHORT, FIELD_CUSTOM, 1, 1, const_cast<char*>("GeoKeyDirectory")},
      {kGdalMetadata, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, const_cast<char*>("GDALMetadata")},
      {kGdalNodata, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, const_cast<char*>("GDALNoDataValue")},
  };
  TIFFMergeFieldInfo(tif, fields, sizeof(fields) / sizeof(fields[0]));
  if (g_parent_extender) g_parent_extender(tif);
}

void install_extender() {
  static std::once_flag once;
  std::call_once(once, [] {
    g_parent_extender = TIFFSetTagExtender(register_geotiff_tags);
    TIFFSetWarningHandler(nullptr);
  });
}

thread_local std::string g_tiff_error;

void tiff_error_handler(const char* module, const char* fmt, va_list ap) {
  char buf[512];
  std::vsnprintf(buf, sizeof(buf), fmt, ap);
  g_tiff_error = std::string(module ? module : "libtiff") + ": " + buf;
}

struct TiffCloser {
  void operator()(TIFF* t) const { TIFFClose(t); }
};
using TiffHandle = std::unique_ptr<TIFF, TiffCloser>;

TiffHandle open_tiff(const fs::path& path, const char* mode) {
  install_extender();
  TIFFSetErrorHandler(tiff_error_handler);
  g_tiff_error.clear();
  TIFF* t = TIFFOpen(path.c_str(), mode);
  if (!t) {
    throw Error("cannot open GeoTIFF " + path.string() +
                (g_tiff_error.empty() ? std::string() : " (" + g_tiff_error + ")"));
  }
  return TiffHandle(t);
}

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void mark_nodata(MultibandRaster& r) {
  r.nodata.assign(r.plane_size(), 0);
  if (!r.nodata_value) return;
  const double nd = *r.nodata_value;
  for (std::size_t i = 0; i < r.plane_size(); ++i) {
    bool all = true;
    for (int b = 0; b < r.bands && all; ++b) {
      const double v = r.pixels[b * r.plane_size() + i];
      all = std::isnan(nd) ? std::isnan(v) : v == nd;
    }
    r.nodata[i] = all ? 1 : 0;
  }
}

// ---- GeoTIFF read -------------------------------------------------------

double sample_value(const unsigned char* p, std::uint16_t format, std::uint16_t bits) {
  switch (format) {
    case SAMPLEFORMAT_IEEEFP:
      if (bits == 32) {
        float f;
        std::memcpy(&f, p, 4);
        return f;
      }
      if (bits == 64) {
        double d;
        std::memcpy(&d, p, 8);
        return d;
      }
      break;
    case SAMPLEFORMAT_INT:
      if (bits == 8) return *reinterpret_cast<const std::int8_t*>(p);
      if (bits == 16) {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        return v;
      }
      if (bits == 32) {
        std::int32_t v;
        std::memcpy(&v, p, 4);
        return v;
      }
      break;
    default:
      if (bits == 8) return *p;
      if (bits == 16) {
        std::uint16_t v;
        std::memcpy(&v, p, 2);
        return v;
      }
      if (bits == 32) {
        std::uint32_t v;
        std::memcpy(&v, p, 4);
        return v;
      }
      break;
  }
  throw Error("unsupported GeoTIFF sample format/bit depth");
}

void read_georef(TIFF* tif, MultibandRaster& r) {
  std::uint16_t count = 0;
  double* scale = nullptr;
  double* tie = nullptr;
  if (TIFFGetField(tif, kModelPixelScale, &count, &scale) && count >= 2 &&
      TIFFGetField(tif, kModelTiepoint, &count, &tie) && count >= 6) {
    GeoTransform g;
    g.pixel_width = scale[0];
    g.pixel_height = scale[1];
    g.origin_x = tie[3] - tie[0] * scale[0];
    g.origin_y = tie[4] + tie[1] * scale[1];
    std::uint16_t* keys = nullptr;
    std::uint16_t nkeys = 0;
    if (TIFFGetField(tif, kGeoKeyDirectory, &nkeys, &keys) && nkeys >= 4) {
      const std::uint16_t n = keys[3];
      for (std::uint16_t i = 0; i < n && 4 + 4 * i + 3 < nkeys; ++i) {
        const std::uint16_t* k = keys + 4 + 4 * i;
        if ((k[0] == kProjectedCsType || k[0] == kGeographicType) && k[1] == 0)
          g.crs = "EPSG:" + std::to_string(k[3]);
      }
    }
    r.georef = g;
  }
}

void read_gdal_metadata(TIFF* tif, MultibandRaster& r) {
  char* nodata = nullptr;
  if (TIFFGetField(tif, kGdalNodata, &nodata) && nodata) {
    const std::string s(nodata);
    r.nodata_value = (s == "nan" || s == "NaN") ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
  }
  char* meta = nullptr;
  if (TIFFGetField(tif, kGdalMetadata, &meta) && meta) {
    const std::string xml(meta);
    for (int b = 0; b < r.bands; ++b) {
      const std::string key = "sample=\"" + std::to_string(b) + "\" role=\"description\">";
      const auto pos = xml.find(key);
      if (pos == std::string::npos) continue;
      const auto start = pos + key.size();
      const auto end = xml.find("</Item>", start);
      if (end != std::string::npos) r.band_names[b] = xml.substr(start, end - start);
    }
  }
}

MultibandRaster load_geotiff(const fs::path& path) {
  auto handle = open_tiff(path, "r");
  TIFF* tif = handle.get();
  std::uint32_t width = 0, height = 0;
  std::uint16_t spp = 1, bits = 8, format = SAMPLEFORMAT_UINT, planar = PLANARCONFIG_CONTIG;
  TIFFGetField(tif, TIFFTAG_IMAGEWIDTH, &width);
  TIFFGetField(tif, TIFFTAG_IMAGELENGTH, &height);
  TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLESPERPIXEL, &spp);
  TIFFGetFieldDefaulted(tif, TIFFTAG_BITSPERSAMPLE, &bits);
  TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLEFORMAT, &format);
  TIFFGetFieldDefaulted(tif, TIFFTAG_PLANARCONFIG, &planar);
  if (width == 0 || height == 0) throw Error("corrupt GeoTIFF (zero extent): " + path.string());
  if (bits % 8 != 0) throw Error("unsupported GeoTIFF bit depth in " + path.string());

  MultibandRaster r = MultibandRaster::zeros(static_cast<int>(width), static_cast<int>(height), spp);
  const std::size_t bytes = bits / 8;
  const bool separate = planar == PLANARCONFIG_SEPARATE;
  const int plane_count = separate ? spp : 1;
  const int per_pixel = separate ? 1 : spp;

  auto store = [&](int plane, std::uint32_t x, std::uint32_t y, const unsigned char* px) {
    for (int s = 0; s < per_pixel; ++s) {
      const int band = separate ? plane : s;
      r.at(band, static_cast<int>(y), static_cast<int>(x)) = sample_value(px + s * bytes, format, bits);
    }
  };

  if (TIFFIsTiled(tif)) {
    std::uint32_t tw = 0, th = 0;
    TIFFGetField(tif, TIFFTAG_TILEWIDTH, &tw);
    TIFFGetField(tif, TIFFTAG_TILELENGTH, &th);
    std::vector<unsigned char> buf(TIFFTileSize(tif));
    for (int plane = 0; plane < plane_count; ++plane)
      for (std::uint32_t ty = 0; ty < height; ty += th)
        for (std::uint32_t tx = 0; tx < width; tx += tw) {
          if (TIFFReadTile(tif, buf.data(), tx, ty, 0, static_cast<std::uint16_t>(plane)) < 0)
            throw Error("corrupt GeoTIFF tile in " + path.string() + ": " + g_tiff_error);
          for (std::uint32_t y = ty; y < std::min(height, ty + th); ++y)
            for (std::uint32_t x = tx; x < std::min(width, tx + tw); ++x)
              store(plane, x, y, buf.data() + ((y - ty) * tw + (x - tx)) * per_pixel * bytes);
        }
  } else {
    std::vector<unsigned char> buf(TIFFScanlineSize(tif));
    for (int plane = 0; plane < plane_count; ++plane)
      for (std::uint32_t y = 0; y < height; ++y) {
        if (TIFFReadScanline(tif, buf.data(), y, static_cast<std::uint16_t>(plane)) < 0)
          throw Error("corrupt GeoTIFF scanline in " + path.string() + ": " + g_tiff_error);
        for (std::uint32_t x = 0; x < width; ++x) store(plane, x, y, buf.data() + x * per_pixel * bytes);
      }
  }
  read_georef(tif, r);
  read_gdal_metadata(tif, r);
  mark_nodata(r);
  return r;
}

// ---- GeoTIFF write ------------------------------------------------------

SampleType resolve_sample_type(const MultibandRaster& r, double nodata_fill) {
  bool integral = true;
  double lo = nodata_fill, hi = nodata_fill;
  for (double v : r.pixels) {
    if (!std::isfinite(v) || v != std::floor(v)) {
      integral = false;
      break;
    }
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (integral && nodata_fill == std::floor(nodata_fill) && lo >= 0) {
    if (hi <= 255) return SampleType::uint8;
    if (hi <= 65535) return SampleType::uint16;
  }
  return SampleType::float32;
}

std::string gdal_metadata_xml(const MultibandRaster& r) {
  std::string xml = "<GDALMetadata>\n";
  for (int b = 0; b < r.bands; ++b) {
    if (b >= static_cast<int>(r.band_names.size())) break;
    xml += "  <Item name=\"DESCRIPTION\" sample=\"" + std::to_string(b) + "\" role=\"description\">" +
           r.band_names[b] + "</Item>\n";
  }
  xml += "</GDALMetadata>";
  return xml;
}

void save_geotiff(const MultibandRaster& r, const fs::path& path, SampleType type) {
  const double fill = r.nodata_value.value_or(0.0);
  if (type == SampleType::automatic) type = resolve_sample_type(r, fill);
  std::uint16_t bits = 0, format = SAMPLEFORMAT_UINT;
  switch (type) {
    case SampleType::uint8: bits = 8; break;
    case SampleType::uint16: bits = 16; break;
    case SampleType::float32: bits = 32; format = SAMPLEFORMAT_IEEEFP; break;
    case SampleType::float64: bits = 64; format = SAMPLEFORMAT_IEEEFP; break;
    case SampleType::automatic: break;
  }

  auto handle = open_tiff(path, "w");
  TIFF* tif = handle.get();
  TIFFSetField(tif, TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(r.width));
  TIFFSetField(tif, TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(r.height));
  TIFFSetField(tif, TIFFTAG_SAMPLESPERPIXEL, static_cast<std::uint16_t>(r.bands));
  TIFFSetField(tif, TIFFTAG_BITSPERSAMPLE, bits);
  TIFFSetField(tif, TIFFTAG_SAMPLEFORMAT, format);
  TIFFSetField(tif, TIFFTAG_PLANARCONFIG, PLANARCONFIG_SEPARATE);
  TIFFSetField(tif, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
  TIFFSetField(tif, TIFFTAG_COMPRESSION, COMPRESSION_NONE);
  TIFFSetField(tif, TIFFTAG_ROWSPERSTRIP, 1u);
  if (r.bands > 1) {
    std::vector<std::uint16_t> extra(r.bands - 1, EXTRASAMPLE_UNSPECIFIED);
    TIFFSetField(tif, TIFFTAG_EXTRASAMPLES, static_cast<std::uint16_t>(extra.size()), extra.data());
  }
  if (r.georef) {
    const auto& g = *r.georef;
    double scale[3] = {g.pixel_width, g.pixel_height, 0.0};
    double tie[6] = {0.0, 0.0, 0.0, g.origin_x, g.origin_y, 0.0};
    TIFFSetField(tif, kModelPixelScale, 3, scale);
    TIFFSetField(tif, kModelTiepoint, 6, tie);
    std::vector<std::uint16_t> keys{1, 1, 0, 2, kGtModelType, 0, 1, 1, kGtRasterType, 0, 1, 1};
    if (g.crs.rfind("EPSG:", 0) == 0) {
      const auto code = static_cast<std::uint16_t>(std::stoi(g.crs.substr(5)));
      const bool geographic = code >= 4000 && code < 5000;
      keys[7] = geographic ? 2 : 1;
      keys.insert(keys.end(), {geographic ? kGeographicType : kProjectedCsType, 0, 1, code});
      keys[3] = 3;
    }
    TIFFSetField(tif, kGeoKeyDirectory, static_cast<int>(keys.size()), keys.data());
  }
  const std::string meta = gdal_metadata_xml(r);
  TIFFSetField(tif, kGdalMetadata, meta.c_str());
  if (r.nodata_value || r.void_count() > 0) {
    const std::string nd = format_number(fill);
    TIFFSetField(tif, kGdalNodata, nd.c_str());
  }

  std::vector<unsigned char> row(static_cast<std::size_t>(r.width) * bits / 8);
  for (int b = 0; b < r.bands; ++b)
    for (int y = 0; y < r.height; ++y) {
      for (int x = 0; x < r.width; ++x) {
        const double v = r.is_void(y, x) ? fill : r.at(b, y, x);
        unsigned char* p = row.data() + static_cast<std::size_t>(x) * bits / 8;
        switch (type) {
          case SampleType::uint8: *p = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); break;
          case SampleType::uint16: {
            const auto u = static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, 65535L));
            std::memcpy(p, &u, 2);
            break;
          }
          case SampleType::float32: {
            const auto f = static_cast<float>(v);
            std::memcpy(p, &f, 4);
            break;
          }
          default: std::memcpy(p, &v, 8); break;
        }
      }
      if (TIFFWriteScanline(tif, row.data(), static_cast<std::uint32_t>(y), static_cast<std::uint16_t>(b)) < 0)
        throw Error("failed writing " + path.string() + ": " + g_tiff_error);
    }
}

// ---- ESRI ASCII grid ----------------------------------------------------

MultibandRaster load_ascii_grid(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  int ncols = -1, nrows = -1;
  double xll = 0.0, yll = 0.0, cell = 1.0;
  bool center = false;
  std::optional<double> nodata;
  std::string key;
  std::streampos data_start = in.tellg();
  while (in >> key) {
    std::string k = key;
    std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return std::tolower(c); });
    if (k == "ncols") in >> ncols;
    else if (k == "nrows") in >> nrows;
    else if (k == "xllcorner") in >> xll;
    else if (k == "yllcorner") in >> yll;
    else if (k == "xllcenter") { in >> xll; center = true; }
    else if (k == "yllcenter") { in >> yll; center = true; }
    else if (k == "cellsize") in >> cell;
    else if (k == "nodata_value") { double v; in >> v; nodata = v; }
    else {
      in.seekg(data_start);
      break;
    }
    data_start = in.tellg();
  }
  if (ncols < 1 || nrows < 1) throw Error("corrupt ASCII grid header in " + path.string());
  in.clear();
  in.seekg(data_start);
  MultibandRaster r = MultibandRaster::zeros(ncols, nrows, 1);
  for (std::size_t i = 0; i < r.pixels.size(); ++i)
    if (!(in >> r.pixels[i])) throw Error("corrupt ASCII grid body in " + path.string());
  GeoTransform g;
  g.pixel_width = g.pixel_height = cell;
  g.origin_x = center ? xll - cell / 2 : xll;
  g.origin_y = (center ? yll - cell / 2 : yll) + nrows * cell;
  r.georef = g;
  r.nodata_value = nodata;
  mark_nodata(r);
  return r;
}

void save_ascii_grid(const MultibandRaster& r, const fs::path& path) {
  if (r.bands != 1) throw Error("ASCII grid holds exactly one band; got " + std::to_string(r.bands));
  if (r.georef && r.georef->pixel_width != r.georef->pixel_height)
    throw Error("ASCII grid requires square cells");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const GeoTransform g = r.georef.value_or(GeoTransform{0.0, static_cast<double>(r.height), 1.0, 1.0, {}});
  const double fill = r.nodata_value.value_or(-9999.0);
  out << "ncols " << r.width << "\nnrows " << r.height << "\nxllcorner " << format_number(g.origin_x)
      << "\nyllcorner " << format_number(g.origin_y - r.height * g.pixel_height) << "\ncellsize "
      << format_number(g.pixel_width) << "\n";
  if (r.nodata_value || r.void_count() > 0) out << "NODATA_value " << format_number(fill) << "\n";
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      if (x) out << ' ';
      out << format_number(r.is_void(y, x) ? fill : r.at(0, y, x));
    }
    out << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

MultibandRaster load_raster(const fs::path& path, std::optional<int> expected_bands) {
  if (!fs::exists(path)) throw Error("raster file not found: " + path.string());
  const std::string ext = lower_ext(path);
  MultibandRaster r;
  if (ext == ".tif" || ext == ".tiff") r = load_geotiff(path);
  else if (ext == ".asc") r = load_ascii_grid(path);
  else throw Error("unsupported raster container '" + ext + "' for " + path.string());
  if (expected_bands && r.bands != *expected_bands)
    throw Error(path.string() + " has " + std::to_string(r.bands) + " bands; expected " +
                std::to_string(*expected_bands));
  r.validate();
  return r;
}

void save_raster(const MultibandRaster& raster, const fs::path& path, SampleType sample_type) {
  raster.validate();
  const auto parent = path.parent_path();
  if (!parent.empty() && !fs::exists(parent)) throw Error("output directory does not exist: " + parent.string());
  const std::string ext = lower_ext(path);
  if (ext == ".tif" || ext == ".tiff") save_geotiff(raster, path, sample_type);
  else if (ext == ".asc") save_ascii_grid(raster, path);
  else throw Error("unsupported raster container '" + ext + "' for " + path.string());
}

}  // namespace relict::raster
