#include "linkbench/pickle.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "linkbench/error.hpp"

namespace linkbench::pickle {

namespace {

Ref make(Object::Kind k) {
  auto o = std::make_shared<Object>();
  o->kind = k;
  return o;
}

Ref make_int(std::int64_t v) {
  auto o = make(Object::Kind::integer);
  o->integer = v;
  return o;
}

Ref make_text(std::string s) {
  auto o = make(Object::Kind::bytes);
  o->text = std::move(s);
  return o;
}

class Machine {
 public:
  explicit Machine(std::span<const std::uint8_t> bytes) : in_(bytes) {}

  Ref run() {
    while (true) {
      const std::size_t at = pos_;
      const std::uint8_t op = u8();
      switch (op) {
        case 0x80: u8(); break;                 // PROTO
        case 0x95: skip(8); break;              // FRAME
        case '.':                               // STOP
          if (stack_.empty()) fail(at, "STOP with empty stack");
          return stack_.back();
        case '(': marks_.push_back(stack_.size()); break;
        case 'N': push(make(Object::Kind::none)); break;
        case 0x88: push(make_bool(true)); break;
        case 0x89: push(make_bool(false)); break;
        case 'K': push(make_int(u8())); break;
        case 'M': push(make_int(le<std::uint16_t>())); break;
        case 'J': push(make_int(static_cast<std::int32_t>(le<std::uint32_t>()))); break;
        case 0x8a: push(make_int(long1(u8()))); break;  // LONG1
        case 'G': {                                      // BINFLOAT, big-endian
          std::uint64_t bits = 0;
          for (int i = 0; i < 8; ++i) bits = (bits << 8) | u8();
          auto o = make(Object::Kind::floating);
          o->floating = std::bit_cast<double>(bits);
          push(o);
          break;
        }
        case 'U':                                        // SHORT_BINSTRING
        case 'C':                                        // SHORT_BINBYTES
        case 0x8c:                                       // SHORT_BINUNICODE
          push(make_text(str(u8())));
          break;
        case 'T':                                        // BINSTRING
        case 'B':                                        // BINBYTES
        case 'X':                                        // BINUNICODE
          push(make_text(str(le<std::uint32_t>())));
          break;
        case 0x8e: push(make_text(str(le<std::uint64_t>()))); break;  // BINBYTES8
        case ')': push(make(Object::Kind::tuple)); break;
        case ']': push(make(Object::Kind::list)); break;
        case '}': push(make(Object::Kind::dict)); break;
        case 0x85: tuple_of(1, at); break;
        case 0x86: tuple_of(2, at); break;
        case 0x87: tuple_of(3, at); break;
        case 't': {
          auto t = make(Object::Kind::tuple);
          t->items = pop_mark(at);
          push(t);
          break;
        }
        case 'l': {
          auto l = make(Object::Kind::list);
          l->items = pop_mark(at);
          push(l);
          break;
        }
        case 'd': {
          auto d = make(Object::Kind::dict);
          auto kv = pop_mark(at);
          if (kv.size() % 2) fail(at, "DICT with odd item count");
          for (std::size_t i = 0; i < kv.size(); i += 2) d->entries.emplace_back(kv[i], kv[i + 1]);
          push(d);
          break;
        }
        case 'a': {
          auto v = pop(at);
          container(at, Object::Kind::list)->items.push_back(v);
          break;
        }
        case 'e': {
          auto vs = pop_mark(at);
          auto& items = container(at, Object::Kind::list)->items;
          items.insert(items.end(), vs.begin(), vs.end());
          break;
        }
        case 's': {
          auto v = pop(at);
          auto k = pop(at);
          mapping(at)->entries.emplace_back(k, v);
          break;
        }
        case 'u': {
          auto kv = pop_mark(at);
          if (kv.size() % 2) fail(at, "SETITEMS with odd item count");
          auto m = mapping(at);
          for (std::size_t i = 0; i < kv.size(); i += 2) m->entries.emplace_back(kv[i], kv[i + 1]);
          break;
        }
        case 'c': {                                      // GLOBAL "module\nname\n"
          auto g = make(Object::Kind::global);
          const std::string module = line(at);
          g->text = module + " " + line(at);
          push(g);
          break;
        }
        case 0x93: {                                     // STACK_GLOBAL
          auto name = pop(at);
          auto module = pop(at);
          auto g = make(Object::Kind::global);
          g->text = module->text + " " + name->text;
          push(g);
          break;
        }
        case 'R':                                        // REDUCE
        case 0x81: {                                     // NEWOBJ
          auto args = pop(at);
          auto callable = pop(at);
          auto inst = make(Object::Kind::instance);
          inst->callable = callable;
          inst->args = args;
          push(inst);
          break;
        }
        case 'b': {                                      // BUILD
          auto st = pop(at);
          if (stack_.empty()) fail(at, "BUILD with empty stack");
          stack_.back()->state = st;
          break;
        }
        case 'q': memo_[u8()] = top(at); break;
        case 'r': memo_[le<std::uint32_t>()] = top(at); break;
        case 0x94: memo_[memo_.size()] = top(at); break;  // MEMOIZE
        case 'h': push(memo_get(u8(), at)); break;
        case 'j': push(memo_get(le<std::uint32_t>(), at)); break;
        case '0': pop(at); break;                          // POP
        default: fail(at, "unsupported opcode 0x" + hex(op));
      }
    }
  }

 private:
  [[noreturn]] void fail(std::size_t at, const std::string& msg) const {
    throw DataError("pickle: " + msg + " at byte " + std::to_string(at));
  }

  static std::string hex(std::uint8_t v) {
    const char* digits = "0123456789abcdef";
    return {digits[v >> 4], digits[v & 15]};
  }

  static Ref make_bool(bool b) {
    auto o = make(Object::Kind::boolean);
    o->flag = b;
    return o;
  }

  std::uint8_t u8() {
    if (pos_ >= in_.size()) fail(pos_, "truncated input");
    return in_[pos_++];
  }

  void skip(std::size_t n) {
    if (in_.size() - pos_ < n) fail(pos_, "truncated input");
    pos_ += n;
  }

  template <typename T>
  T le() {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(u8()) << (8 * i));
    return v;
  }

  std::int64_t long1(std::size_t n) {
    if (n > 8) fail(pos_, "LONG1 wider than 64 bits");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    if (n > 0 && n < 8 && (v >> (8 * n - 1)) & 1) v |= ~std::uint64_t{0} << (8 * n);
    return static_cast<std::int64_t>(v);
  }

  std::string str(std::uint64_t n) {
    if (in_.size() - pos_ < n) fail(pos_, "truncated string");
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::string line(std::size_t at) {
    std::string s;
    while (true) {
      if (pos_ >= in_.size()) fail(at, "unterminated GLOBAL");
      const char c = static_cast<char>(in_[pos_++]);
      if (c == '\n') return s;
      s.push_back(c);
    }
  }

  void push(Ref r) { stack_.push_back(std::move(r)); }

  Ref pop(std::size_t at) {
    if (stack_.empty() || (!marks_.empty() && stack_.size() <= marks_.back())) fail(at, "stack underflow");
    auto r = stack_.back();
    stack_.pop_back();
    return r;
  }

  Ref top(std::size_t at) {
    if (stack_.empty()) fail(at, "memo store with empty stack");
    return stack_.back();
  }

  Ref memo_get(std::uint64_t key, std::size_t at) {
    auto it = memo_.find(key);
    if (it == memo_.end()) fail(at, "memo key " + std::to_string(key) + " missing");
    return it->second;
  }

  std::vector<Ref> pop_mark(std::size_t at) {
    if (marks_.empty()) fail(at, "no MARK on stack");
    const std::size_t m = marks_.back();
    marks_.pop_back();
    std::vector<Ref> out(stack_.begin() + static_cast<std::ptrdiff_t>(m), stack_.end());
    stack_.resize(m);
    return out;
  }

  void tuple_of(std::size_t n, std::size_t at) {
    if (stack_.size() < n) fail(at, "stack underflow building tuple");
    auto t = make(Object::Kind::tuple);
    t->items.assign(stack_.end() - static_cast<std::ptrdiff_t>(n), stack_.end());
    stack_.resize(stack_.size() - n);
    push(t);
  }

  Ref container(std::size_t at, Object::Kind kind) {
    if (stack_.empty() || !stack_.back()->is(kind)) fail(at, "append target is not a list");
    return stack_.back();
  }

  // dicts, and instances such as defaultdict that receive SETITEMS.
  Ref mapping(std::size_t at) {
    if (stack_.empty() || !(stack_.back()->is(Object::Kind::dict) || stack_.back()->is(Object::Kind::instance))) {
      fail(at, "setitem target is not a mapping");
    }
    return stack_.back();
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::vector<Ref> stack_;
  std::vector<std::size_t> marks_;
  std::unordered_map<std::uint64_t, Ref> memo_;
};

bool global_is(const Ref& g, std::initializer_list<const char*> names) {
  if (!g || !g->is(Object::Kind::global)) return false;
  for (const char* n : names)
    if (g->text == n) return true;
  return false;
}

const Ref& item(const Ref& tuple, std::size_t i, const char* what) {
  if (!tuple || !(tuple->is(Object::Kind::tuple) || tuple->is(Object::Kind::list)) || tuple->items.size() <= i) {
    throw DataError(std::string("pickle: malformed ") + what);
  }
  return tuple->items[i];
}

std::int64_t as_int(const Ref& r, const char* what) {
  if (!r || !r->is(Object::Kind::integer)) throw DataError(std::string("pickle: expected integer for ") + what);
  return r->integer;
}

template <typename T>
T load_le(const std::uint8_t* p, bool big_endian) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, p, sizeof(T));
  if (big_endian) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

// Python 3 writes bytes under protocol 2 as _codecs.encode(str, "latin1").
std::string payload_bytes(const Ref& r) {
  if (r && r->is(Object::Kind::bytes)) return r->text;
  if (!r || !r->is(Object::Kind::instance) || !global_is(r->callable, {"_codecs encode"})) {
    throw DataError("pickle: ndarray data is not a byte string");
  }
  const std::string& utf8 = item(r->args, 0, "encoded payload")->text;
  if (item(r->args, 1, "payload encoding")->text != "latin1") throw DataError("pickle: unsupported payload encoding");
  std::string out;
  out.reserve(utf8.size());
  for (std::size_t i = 0; i < utf8.size(); ++i) {
    const auto c = static_cast<unsigned char>(utf8[i]);
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else if ((c & 0xe0) == 0xc0 && c <= 0xc3 && i + 1 < utf8.size()) {
      out.push_back(static_cast<char>(((c & 0x03) << 6) | (static_cast<unsigned char>(utf8[++i]) & 0x3f)));
    } else {
      throw DataError("pickle: latin1 payload holds a code point above U+00FF");
    }
  }
  return out;
}

}  // namespace

Ref parse(std::span<const std::uint8_t> bytes) { return Machine(bytes).run(); }

Ref parse_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return parse(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

NdArray to_ndarray(const Ref& obj) {
  if (!obj || !obj->is(Object::Kind::instance) ||
      !global_is(obj->callable, {"numpy.core.multiarray _reconstruct", "numpy._core.multiarray _reconstruct"})) {
    throw DataError("pickle: object is not a numpy array");
  }
  const Ref& st = obj->state;
  const auto& shape_t = item(st, 1, "ndarray shape");
  const auto& dtype = item(st, 2, "ndarray dtype");
  const bool fortran = item(st, 3, "ndarray order")->flag;
  const std::string raw = payload_bytes(item(st, 4, "ndarray data"));
  if (!dtype->is(Object::Kind::instance) || !global_is(dtype->callable, {"numpy dtype"})) {
    throw DataError("pickle: ndarray dtype is not numpy.dtype");
  }
  const std::string code = item(dtype->args, 0, "dtype code")->text;
  const bool big = dtype->state && item(dtype->state, 1, "dtype byte order")->text == ">";

  NdArray out;
  std::size_t count = 1;
  for (const auto& d : shape_t->items) {
    out.shape.push_back(static_cast<std::size_t>(as_int(d, "ndarray dimension")));
    count *= out.shape.back();
  }
  std::size_t width = 0;
  if (code == "f8" || code == "i8" || code == "u8") width = 8;
  else if (code == "f4" || code == "i4" || code == "u4") width = 4;
  else if (code == "i2" || code == "u2") width = 2;
  else if (code == "i1" || code == "u1" || code == "b1") width = 1;
  else throw DataError("pickle: unsupported dtype " + code);
  if (raw.size() != count * width) throw DataError("pickle: ndarray payload size mismatch");

  const auto* p = reinterpret_cast<const std::uint8_t*>(raw.data());
  out.values.resize(count);
  for (std::size_t i = 0; i < count; ++i, p += width) {
    double v = 0.0;
    if (code == "f8") v = load_le<double>(p, big);
    else if (code == "f4") v = load_le<float>(p, big);
    else if (code == "i8") v = static_cast<double>(load_le<std::int64_t>(p, big));
    else if (code == "u8") v = static_cast<double>(load_le<std::uint64_t>(p, big));
    else if (code == "i4") v = load_le<std::int32_t>(p, big);
    else if (code == "u4") v = load_le<std::uint32_t>(p, big);
    else if (code == "i2") v = load_le<std::int16_t>(p, big);
    else if (code == "u2") v = load_le<std::uint16_t>(p, big);
    else if (code == "i1") v = static_cast<std::int8_t>(*p);
    else v = *p;
    out.values[i] = v;
  }
  if (fortran && out.shape.size() == 2) {
    const std::size_t r = out.shape[0], c = out.shape[1];
    std::vector<double> rm(count);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) rm[i * c + j] = out.values[j * r + i];
    out.values = std::move(rm);
  }
  return out;
}

SparseMatrix to_csr(const Ref& obj) {
  if (!obj || !obj->is(Object::Kind::instance) ||
      !global_is(obj->callable, {"scipy.sparse.csr csr_matrix", "scipy.sparse._csr csr_matrix"})) {
    throw DataError("pickle: object is not a scipy csr_matrix");
  }
  const Ref& st = obj->state;
  if (!st || !st->is(Object::Kind::dict)) throw DataError("pickle: csr_matrix without state dict");
  Ref shape, indptr, indices, data;
  for (const auto& [k, v] : st->entries) {
    if (k->text == "_shape") shape = v;
    else if (k->text == "indptr") indptr = v;
    else if (k->text == "indices") indices = v;
    else if (k->text == "data") data = v;
  }
  if (!shape || !indptr || !indices || !data) throw DataError("pickle: csr_matrix state incomplete");
  const auto rows = static_cast<std::size_t>(as_int(item(shape, 0, "csr shape"), "csr rows"));
  const auto cols = static_cast<std::size_t>(as_int(item(shape, 1, "csr shape"), "csr cols"));
  const auto ptr = to_ndarray(indptr).values;
  const auto idx = to_ndarray(indices).values;
  const auto val = to_ndarray(data).values;
  if (ptr.size() != rows + 1 || idx.size() != val.size()) throw DataError("pickle: csr arrays inconsistent");
  std::vector<Triplet> t;
  t.reserve(val.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (auto k = static_cast<std::size_t>(ptr[r]); k < static_cast<std::size_t>(ptr[r + 1]); ++k) {
      if (k >= idx.size()) throw DataError("pickle: csr indptr out of range");
      t.push_back({r, static_cast<std::size_t>(idx[k]), val[k]});
    }
  }
  return SparseMatrix::from_triplets(rows, cols, std::move(t));
}

std::vector<std::pair<std::int64_t, std::vector<std::int64_t>>> to_adjacency(const Ref& obj) {
  if (!obj || !(obj->is(Object::Kind::dict) ||
                (obj->is(Object::Kind::instance) && global_is(obj->callable, {"collections defaultdict"})))) {
    throw DataError("pickle: adjacency is not a dict");
  }
  std::vector<std::pair<std::int64_t, std::vector<std::int64_t>>> out;
  out.reserve(obj->entries.size());
  for (const auto& [k, v] : obj->entries) {
    if (!v->is(Object::Kind::list) && !v->is(Object::Kind::tuple)) throw DataError("pickle: adjacency value is not a list");
    std::vector<std::int64_t> nbrs;
    nbrs.reserve(v->items.size());
    for (const auto& n : v->items) nbrs.push_back(as_int(n, "neighbor id"));
    out.emplace_back(as_int(k, "node id"), std::move(nbrs));
  }
  return out;
}

}  // namespace linkbench::pickle
