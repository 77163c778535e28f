#include "pulselab/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "pulselab/errors.hpp"

namespace pulselab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void put_f64(std::string& out, double x) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char buf[8];
  std::memcpy(buf, &bits, 8);
  out.append(buf, 8);
}

double get_f64(const std::string& in, size_t pos) {
  std::uint64_t bits;
  std::memcpy(&bits, in.data() + pos, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  return std::bit_cast<double>(bits);
}

void write_snapshot(const fs::path& path, const json& header, const std::string& payload) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  f << header.dump() << '\n';
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!f) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

// Splits a snapshot into its parsed header and binary payload.
std::pair<json, std::string> read_snapshot(const fs::path& path) {
  const std::string bytes = read_text(path);
  const size_t nl = bytes.find('\n');
  if (nl == std::string::npos) throw Error(ErrorKind::Io, path.string() + ": missing header line");
  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, path.string() + ": bad header: " + e.what());
  }
  return {header, bytes.substr(nl + 1)};
}

template <class T>
T header_get(const json& h, const char* key, const fs::path& path) {
  if (!h.contains(key)) throw Error(ErrorKind::Io, path.string() + ": header lacks '" + key + "'");
  return h.at(key).get<T>();
}

}  // namespace

void write_pulse_snapshot(const fs::path& path, const PulseProfile& phi) {
  json h;
  h["N_z"] = phi.grid.N_z;
  h["L_z"] = phi.grid.L_z;
  h["alpha"] = phi.params.alpha;
  h["gamma"] = phi.params.gamma;
  h["eps"] = phi.params.eps;
  h["c"] = phi.c;
  h["residual"] = phi.residual;
  std::string payload;
  payload.reserve(16 * phi.phi1.size());
  for (Eigen::Index i = 0; i < phi.phi1.size(); ++i) put_f64(payload, phi.phi1[i]);
  for (Eigen::Index i = 0; i < phi.phi2.size(); ++i) put_f64(payload, phi.phi2[i]);
  write_snapshot(path, h, payload);
}

PulseProfile read_pulse_snapshot(const fs::path& path) {
  auto [h, payload] = read_snapshot(path);
  PulseProfile phi;
  try {
    phi.grid.N_z = header_get<int>(h, "N_z", path);
    phi.grid.L_z = header_get<double>(h, "L_z", path);
    phi.params.alpha = header_get<double>(h, "alpha", path);
    phi.params.gamma = header_get<double>(h, "gamma", path);
    phi.params.eps = header_get<double>(h, "eps", path);
    phi.c = header_get<double>(h, "c", path);
    phi.residual = header_get<double>(h, "residual", path);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, path.string() + ": bad header value: " + e.what());
  }
  phi.grid.validate();
  const size_t N = static_cast<size_t>(phi.grid.N_z);
  if (payload.size() != 16 * N)
    throw Error(ErrorKind::Io, path.string() + ": payload has " + std::to_string(payload.size()) +
                                   " bytes, expected " + std::to_string(16 * N));
  phi.phi1.resize(phi.grid.N_z);
  phi.phi2.resize(phi.grid.N_z);
  for (size_t i = 0; i < N; ++i) {
    phi.phi1[i] = get_f64(payload, 8 * i);
    phi.phi2[i] = get_f64(payload, 8 * (N + i));
  }
  return phi;
}

void write_field_snapshot(const fs::path& path, const Field& u, double t) {
  json h;
  h["N_z"] = u.grid.N_z;
  h["L_z"] = u.grid.L_z;
  h["modes"] = u.modes();
  h["frame"] = u.frame == Frame::Moving ? "moving" : "static";
  h["t"] = t;
  std::string payload;
  payload.reserve(32 * u.u1.size());
  for (const MatrixXcd* m : {&u.u1, &u.u2}) {
    for (Eigen::Index n = 0; n < m->cols(); ++n) {
      for (Eigen::Index i = 0; i < m->rows(); ++i) {
        put_f64(payload, (*m)(i, n).real());
        put_f64(payload, (*m)(i, n).imag());
      }
    }
  }
  write_snapshot(path, h, payload);
}

Field read_field_snapshot(const fs::path& path, double* t) {
  auto [h, payload] = read_snapshot(path);
  GridSpec g;
  std::string frame;
  double time = 0.0;
  try {
    g.N_z = header_get<int>(h, "N_z", path);
    g.L_z = header_get<double>(h, "L_z", path);
    g.N_theta = header_get<int>(h, "modes", path);
    frame = header_get<std::string>(h, "frame", path);
    time = header_get<double>(h, "t", path);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, path.string() + ": bad header value: " + e.what());
  }
  g.validate();
  if (frame != "moving" && frame != "static")
    throw Error(ErrorKind::Io, path.string() + ": unknown frame tag '" + frame + "'");
  Field u(g, frame == "moving" ? Frame::Moving : Frame::Static);
  const size_t per = static_cast<size_t>(g.N_z) * g.N_theta;
  if (payload.size() != 32 * per)
    throw Error(ErrorKind::Io, path.string() + ": payload size does not match the header");
  size_t pos = 0;
  for (MatrixXcd* m : {&u.u1, &u.u2}) {
    for (Eigen::Index n = 0; n < m->cols(); ++n) {
      for (Eigen::Index i = 0; i < m->rows(); ++i) {
        (*m)(i, n) = cplx(get_f64(payload, pos), get_f64(payload, pos + 8));
        pos += 16;
      }
    }
  }
  if (t) *t = time;
  return u;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  // Shortest representation that reads back to the same double.
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

CsvTable::CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

void CsvTable::add_row(const std::vector<double>& row) {
  if (row.size() != columns_.size())
    throw Error(ErrorKind::ShapeMismatch, "CSV row has " + std::to_string(row.size()) +
                                              " values for " + std::to_string(columns_.size()) +
                                              " columns");
  data_.push_back(row);
}

std::string CsvTable::str() const {
  std::string out;
  for (size_t j = 0; j < columns_.size(); ++j) {
    if (j) out += ',';
    out += columns_[j];
  }
  out += '\n';
  for (const auto& row : data_) {
    for (size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      out += format_double(row[j]);
    }
    out += '\n';
  }
  return out;
}

void CsvTable::write(const fs::path& path) const { write_text(path, str()); }

std::string sha256_bytes(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::Io, "SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_bytes(read_text(path)); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace pulselab
