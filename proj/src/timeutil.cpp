#include "evsched/timeutil.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>

#include "evsched/errors.hpp"

namespace evsched {
namespace {

using namespace std::chrono;

class Cursor {
 public:
  explicit Cursor(std::string_view s) : s_(s) {}

  bool done() const { return pos_ >= s_.size(); }
  char peek() const { return done() ? '\0' : s_[pos_]; }
  void skip_spaces() {
    while (!done() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    if (peek() != c) return false;
    ++pos_;
    return true;
  }
  int digits(std::size_t count) {
    if (pos_ + count > s_.size()) fail();
    int value = 0;
    auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + pos_ + count, value);
    if (ec != std::errc{} || ptr != s_.data() + pos_ + count) fail();
    pos_ += count;
    return value;
  }
  std::string_view word() {
    std::size_t start = pos_;
    while (!done() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    return s_.substr(start, pos_ - start);
  }
  [[noreturn]] void fail() const {
    throw ParseError("unrecognized timestamp '" + std::string(s_) + "'");
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

Timestamp compose(int y, int mo, int d, int h, int mi, int offset_minutes, const Cursor& cur) {
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59) cur.fail();
  return Timestamp{sys_days{ymd}} + hours{h} + minutes{mi} - minutes{offset_minutes};
}

Timestamp parse_rfc1123(Cursor& cur) {
  // "Thu, 17 Oct 2019 18:06:41 GMT"
  static constexpr std::array<std::string_view, 12> kMonths = {
      "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
  cur.word();
  if (!cur.accept(',')) cur.fail();
  cur.skip_spaces();
  int d = cur.digits(2);
  cur.skip_spaces();
  auto mon = cur.word();
  int mo = 0;
  for (std::size_t i = 0; i < kMonths.size(); ++i)
    if (mon == kMonths[i]) mo = static_cast<int>(i) + 1;
  if (mo == 0) cur.fail();
  cur.skip_spaces();
  int y = cur.digits(4);
  cur.skip_spaces();
  int h = cur.digits(2);
  if (!cur.accept(':')) cur.fail();
  int mi = cur.digits(2);
  if (cur.accept(':')) cur.digits(2);
  cur.skip_spaces();
  auto zone = cur.word();
  if (zone != "GMT" && zone != "UTC") cur.fail();
  cur.skip_spaces();
  if (!cur.done()) cur.fail();
  return compose(y, mo, d, h, mi, 0, cur);
}

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
  Cursor cur(text);
  cur.skip_spaces();
  if (std::isalpha(static_cast<unsigned char>(cur.peek()))) return parse_rfc1123(cur);

  int y = cur.digits(4);
  if (!cur.accept('-')) cur.fail();
  int mo = cur.digits(2);
  if (!cur.accept('-')) cur.fail();
  int d = cur.digits(2);
  if (!cur.accept('T') && !cur.accept(' ')) cur.fail();
  int h = cur.digits(2);
  if (!cur.accept(':')) cur.fail();
  int mi = cur.digits(2);
  if (cur.accept(':')) {
    cur.digits(2);
    if (cur.accept('.') || cur.accept(',')) {
      while (std::isdigit(static_cast<unsigned char>(cur.peek()))) cur.digits(1);
    }
  }
  int offset = 0;
  if (cur.accept('Z') || cur.accept('z')) {
  } else if (cur.peek() == '+' || cur.peek() == '-') {
    int sign = cur.peek() == '-' ? -1 : 1;
    cur.accept(cur.peek());
    int oh = cur.digits(2);
    cur.accept(':');
    int om = cur.digits(2);
    offset = sign * (oh * 60 + om);
  }
  cur.skip_spaces();
  if (!cur.done()) cur.fail();
  return compose(y, mo, d, h, mi, offset, cur);
}

std::string format_timestamp(Timestamp t) {
  auto day_point = floor<days>(t);
  year_month_day ymd{day_point};
  auto minute_in_day = (t - day_point).count();
  std::array<char, 64> buf{};
  std::snprintf(buf.data(), buf.size(), "%04d-%02u-%02uT%02lld:%02lld:00Z", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long long>(minute_in_day / 60), static_cast<long long>(minute_in_day % 60));
  return buf.data();
}

int minute_of_day(Timestamp t) {
  return static_cast<int>((t - floor<days>(t)).count());
}

}  // namespace evsched
