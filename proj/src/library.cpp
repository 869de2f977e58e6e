#include "sbf/library.hpp"

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sbf/errors.hpp"

namespace fs = std::filesystem;

namespace sbf {

namespace {

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw IoError(where + ": bad number '" + s + "'");
  return v;
}

std::string entry_name(size_t k) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "entry_%03zu", k);
  return buf;
}

std::string blob_name(size_t m) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "subarray_%03zu.bin", m);
  return buf;
}

// Reads "key value..." lines into a token list, checking the key.
std::vector<std::string> expect(std::istream& in, const std::string& key, const std::string& where) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(where + ": missing '" + key + "'");
  std::istringstream s(line);
  std::string k;
  s >> k;
  if (k != key) throw IoError(where + ": expected '" + key + "', found '" + k + "'");
  std::vector<std::string> out;
  for (std::string t; s >> t;) out.push_back(t);
  return out;
}

long parse_long(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0') throw IoError(where + ": bad integer '" + s + "'");
  return v;
}

}  // namespace

void write_policy(std::ostream& out, const Policy& policy) {
  out << "sbf-policy " << kLibraryVersion << '\n';
  out << "fine_tune " << (policy.fine_tune ? 1 : 0) << '\n';
  out << "steps " << policy.steps << '\n';
  out << "state " << policy.state.size() << '\n';
  for (float v : policy.state) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  for (const NetworkF* n : {&policy.actor, &policy.critic1, &policy.critic2, &policy.target_actor,
                            &policy.target_critic1, &policy.target_critic2})
    n->serialize(out);
  if (!out) throw IoError("policy: write failed");
}

Policy read_policy(std::istream& in) {
  const std::string where = "policy";
  const auto head = expect(in, "sbf-policy", where);
  if (head.size() != 1 || parse_long(head[0], where) != kLibraryVersion)
    throw IoError("policy: unsupported version");
  Policy p;
  p.fine_tune = parse_long(expect(in, "fine_tune", where).at(0), where) != 0;
  p.steps = parse_long(expect(in, "steps", where).at(0), where);
  const long n = parse_long(expect(in, "state", where).at(0), where);
  if (n < 0 || n > (1 << 24)) throw IoError("policy: bad state size");
  p.state.resize(n);
  for (float& v : p.state) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("policy: state truncated");
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    v = std::bit_cast<float>(bits);
  }
  for (NetworkF* net : {&p.actor, &p.critic1, &p.critic2, &p.target_actor, &p.target_critic1, &p.target_critic2})
    *net = NetworkF::deserialize(in);
  if (p.actor.input_dim() != static_cast<int>(n) || p.critic1.input_dim() != 2 * static_cast<int>(n))
    throw IoError("policy: network shapes do not match the state size");
  if (!p.actor.same_architecture(p.target_actor) || !p.critic1.same_architecture(p.critic2) ||
      !p.critic1.same_architecture(p.target_critic1) || !p.critic1.same_architecture(p.target_critic2))
    throw IoError("policy: inconsistent network architectures");
  return p;
}

void library_save(const PolicyLibrary& library, const std::string& path) {
  const fs::path root(path);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("library: cannot create " + path + ": " + ec.message());
  {
    std::ofstream index(root / "library.txt");
    if (!index) throw IoError("library: cannot write " + (root / "library.txt").string());
    index << "sbf-library " << kLibraryVersion << '\n';
    index << "entries " << library.entries.size() << '\n';
    for (size_t k = 0; k < library.entries.size(); ++k) index << "entry " << entry_name(k) << '\n';
  }
  for (size_t k = 0; k < library.entries.size(); ++k) {
    const auto& e = library.entries[k];
    if (e.policies.size() != e.pdis.size()) throw DomainError("library: policies and PDIs differ in count");
    const fs::path dir = root / entry_name(k);
    fs::create_directories(dir, ec);
    if (ec) throw IoError("library: cannot create " + dir.string());
    std::ofstream man(dir / "manifest.txt");
    if (!man) throw IoError("library: cannot write " + (dir / "manifest.txt").string());
    man << "sbf-library-entry " << kLibraryVersion << '\n';
    man << "dfp_m " << hex(e.dfp.x) << ' ' << hex(e.dfp.y) << ' ' << hex(e.dfp.z) << '\n';
    man << "seed " << e.seed << '\n';
    man << "budget " << e.budget << '\n';
    man << "achieved_power " << hex(e.achieved_power) << '\n';
    man << "subarrays " << e.policies.size() << '\n';
    for (size_t m = 0; m < e.pdis.size(); ++m) {
      const auto& w = e.pdis[m];
      man << "pdi " << m << ' ' << w.rows() << ' ' << w.cols() << ' ' << w.bits;
      for (int v : w.levels.data) man << ' ' << v;
      man << '\n';
    }
    for (size_t m = 0; m < e.policies.size(); ++m) {
      std::ofstream blob(dir / blob_name(m), std::ios::binary);
      if (!blob) throw IoError("library: cannot write " + (dir / blob_name(m)).string());
      write_policy(blob, e.policies[m]);
    }
  }
}

LibrarySummary library_summary(const std::string& path) {
  const fs::path file = fs::path(path) / "library.txt";
  std::ifstream index(file);
  if (!index) throw IoError("library: cannot read " + file.string());
  const std::string where = file.string();
  const auto head = expect(index, "sbf-library", where);
  if (head.size() != 1) throw IoError(where + ": bad header");
  LibrarySummary s;
  s.version = static_cast<int>(parse_long(head[0], where));
  if (s.version != kLibraryVersion) throw IoError(where + ": unsupported library version " + head[0]);
  s.entries = static_cast<int>(parse_long(expect(index, "entries", where).at(0), where));
  if (s.entries < 0) throw IoError(where + ": negative entry count");
  return s;
}

PolicyLibrary library_load(const std::string& path) {
  const fs::path root(path);
  const auto summary = library_summary(path);
  std::ifstream index(root / "library.txt");
  const std::string where = (root / "library.txt").string();
  expect(index, "sbf-library", where);
  expect(index, "entries", where);

  PolicyLibrary lib;
  for (int k = 0; k < summary.entries; ++k) {
    const auto name = expect(index, "entry", where);
    if (name.size() != 1 || name[0].find('/') != std::string::npos) throw IoError(where + ": bad entry name");
    const fs::path dir = root / name[0];
    const std::string mwhere = (dir / "manifest.txt").string();
    std::ifstream man(dir / "manifest.txt");
    if (!man) throw IoError("library: cannot read " + mwhere);
    const auto head = expect(man, "sbf-library-entry", mwhere);
    if (head.size() != 1 || parse_long(head[0], mwhere) != kLibraryVersion)
      throw IoError(mwhere + ": unsupported entry version");
    LibraryEntry e;
    const auto d = expect(man, "dfp_m", mwhere);
    if (d.size() != 3) throw IoError(mwhere + ": dfp needs three coordinates");
    e.dfp = {parse_double(d[0], mwhere), parse_double(d[1], mwhere), parse_double(d[2], mwhere)};
    const auto seed = expect(man, "seed", mwhere);
    if (seed.size() != 1) throw IoError(mwhere + ": bad seed");
    e.seed = std::strtoull(seed[0].c_str(), nullptr, 10);
    e.budget = parse_long(expect(man, "budget", mwhere).at(0), mwhere);
    e.achieved_power = parse_double(expect(man, "achieved_power", mwhere).at(0), mwhere);
    const long count = parse_long(expect(man, "subarrays", mwhere).at(0), mwhere);
    if (count < 0) throw IoError(mwhere + ": negative subarray count");
    for (long m = 0; m < count; ++m) {
      const auto t = expect(man, "pdi", mwhere);
      if (t.size() < 4 || parse_long(t[0], mwhere) != m) throw IoError(mwhere + ": bad pdi line");
      const int rows = static_cast<int>(parse_long(t[1], mwhere));
      const int cols = static_cast<int>(parse_long(t[2], mwhere));
      const int bits = static_cast<int>(parse_long(t[3], mwhere));
      if (rows < 1 || cols < 1 || bits < 1 || bits > 16 || t.size() != 4 + static_cast<size_t>(rows) * cols)
        throw IoError(mwhere + ": pdi shape mismatch");
      BeamfocusingMatrix w(rows, cols, bits);
      for (size_t i = 0; i < w.levels.size(); ++i) w.levels.data[i] = static_cast<int>(parse_long(t[4 + i], mwhere));
      try {
        w.validate();
      } catch (const std::exception& ex) {
        throw IoError(mwhere + ": " + ex.what());
      }
      e.pdis.push_back(std::move(w));
    }
    for (long m = 0; m < count; ++m) {
      const fs::path file = dir / blob_name(static_cast<size_t>(m));
      std::ifstream blob(file, std::ios::binary);
      if (!blob) throw IoError("library: cannot read " + file.string());
      try {
        e.policies.push_back(read_policy(blob));
      } catch (const IoError& ex) {
        throw IoError(file.string() + ": " + ex.what());
      }
      if (e.policies.back().elements() != static_cast<int>(e.pdis[m].levels.size()))
        throw IoError(file.string() + ": policy size does not match the stored PDI");
    }
    lib.add(std::move(e));
  }
  return lib;
}

}  // namespace sbf
