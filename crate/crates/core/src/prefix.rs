//! IP prefixes and AS numbers.
//!
//! A [`Prefix`] stores its network bits left-aligned in a `u128` for both
//! address families, so bit `i` counted from the most significant end is the
//! same operation for IPv4 and IPv6. Host bits beyond the prefix length are
//! always zero.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    V4,
    V6,
}

impl Family {
    pub const fn max_len(self) -> u8 {
        match self {
            Family::V4 => 32,
            Family::V6 => 128,
        }
    }
}

/// A canonical IP prefix.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prefix {
    family: Family,
    bits: u128,
    len: u8,
}

fn mask(len: u8) -> u128 {
    if len == 0 {
        0
    } else {
        u128::MAX << (128 - u32::from(len))
    }
}

impl Prefix {
    /// Builds a prefix, rejecting host bits set beyond `len`.
    pub fn new(addr: IpAddr, len: u8) -> Result<Self, Error> {
        let p = Self::new_truncated(addr, len)?;
        if p.bits != Self::left_align(addr) {
            return Err(Error::InvalidPrefix(
                format!("{addr}/{len}"),
                "host bits set",
            ));
        }
        Ok(p)
    }

    /// Builds a prefix, clearing any host bits beyond `len`.
    pub fn new_truncated(addr: IpAddr, len: u8) -> Result<Self, Error> {
        let family = match addr {
            IpAddr::V4(_) => Family::V4,
            IpAddr::V6(_) => Family::V6,
        };
        if len > family.max_len() {
            return Err(Error::InvalidPrefix(
                format!("{addr}/{len}"),
                "length exceeds address family maximum",
            ));
        }
        Ok(Prefix {
            family,
            bits: Self::left_align(addr) & mask(len),
            len,
        })
    }

    /// The host route for a single address.
    pub fn host(addr: IpAddr) -> Self {
        let len = match addr {
            IpAddr::V4(_) => 32,
            IpAddr::V6(_) => 128,
        };
        Self::new_truncated(addr, len).expect("full-length prefix is valid")
    }

    fn left_align(addr: IpAddr) -> u128 {
        match addr {
            IpAddr::V4(a) => u128::from(u32::from(a)) << 96,
            IpAddr::V6(a) => u128::from(a),
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u8 {
        self.len
    }

    /// Left-aligned network bits.
    pub fn bits(&self) -> u128 {
        self.bits
    }

    /// Bit `i` of the network address, counted from the most significant end.
    pub fn bit(&self, i: u8) -> bool {
        debug_assert!(i < 128);
        (self.bits >> (127 - u32::from(i))) & 1 == 1
    }

    pub fn addr(&self) -> IpAddr {
        match self.family {
            Family::V4 => IpAddr::V4(Ipv4Addr::from((self.bits >> 96) as u32)),
            Family::V6 => IpAddr::V6(Ipv6Addr::from(self.bits)),
        }
    }

    /// True if `self` is equal to or less specific than `other` and contains it.
    pub fn covers(&self, other: &Prefix) -> bool {
        self.family == other.family
            && self.len <= other.len
            && (other.bits & mask(self.len)) == self.bits
    }

    /// True if `self` covers `other` and is strictly shorter.
    pub fn strictly_covers(&self, other: &Prefix) -> bool {
        self.len < other.len && self.covers(other)
    }

    pub fn contains_addr(&self, addr: IpAddr) -> bool {
        self.covers(&Prefix::host(addr))
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr(), self.len)
    }
}

impl fmt::Debug for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Prefix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (addr, len) = s
            .split_once('/')
            .ok_or_else(|| Error::InvalidPrefix(s.to_string(), "missing prefix length"))?;
        let addr: IpAddr = addr
            .parse()
            .map_err(|_| Error::InvalidPrefix(s.to_string(), "bad address"))?;
        if len.is_empty() || !len.bytes().all(|b| b.is_ascii_digit()) || len.len() > 3 {
            return Err(Error::InvalidPrefix(s.to_string(), "bad prefix length"));
        }
        let len: u8 = len
            .parse()
            .map_err(|_| Error::InvalidPrefix(s.to_string(), "bad prefix length"))?;
        Prefix::new(addr, len)
    }
}

impl Serialize for Prefix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Prefix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A 32-bit AS number.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Asn(pub u32);

impl Asn {
    pub fn value(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Asn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Asn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AS{}", self.0)
    }
}

impl From<u32> for Asn {
    fn from(v: u32) -> Self {
        Asn(v)
    }
}

/// Accepts `AS64512`, `as64512` or a bare `64512`.
impl FromStr for Asn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let digits = t
            .strip_prefix("AS")
            .or_else(|| t.strip_prefix("as"))
            .or_else(|| t.strip_prefix("As"))
            .unwrap_or(t);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::InvalidAsn(s.to_string()));
        }
        digits
            .parse::<u32>()
            .map(Asn)
            .map_err(|_| Error::InvalidAsn(s.to_string()))
    }
}

/// Predicate over reserved and special-purpose AS numbers.
///
/// The default range list is the IANA special-purpose AS number registry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BogonFilter {
    ranges: Vec<(u32, u32)>,
}

impl BogonFilter {
    pub fn new(mut ranges: Vec<(u32, u32)>) -> Self {
        ranges.sort_unstable();
        BogonFilter { ranges }
    }

    /// A filter that flags nothing.
    pub fn none() -> Self {
        BogonFilter { ranges: Vec::new() }
    }

    pub fn is_bogon(&self, asn: Asn) -> bool {
        self.ranges
            .iter()
            .any(|&(lo, hi)| lo <= asn.0 && asn.0 <= hi)
    }
}

impl Default for BogonFilter {
    fn default() -> Self {
        BogonFilter::new(vec![
            (0, 0),
            (23456, 23456),
            (64496, 64511),
            (64512, 65534),
            (65535, 65535),
            (65536, 65551),
            (65552, 131071),
            (4_200_000_000, 4_294_967_294),
            (4_294_967_295, 4_294_967_295),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Prefix {
        s.parse().unwrap()
    }

    #[test]
    fn parse_and_display() {
        assert_eq!(p("193.2.0.0/15").to_string(), "193.2.0.0/15");
        assert_eq!(p("2001:DB8::/32").to_string(), "2001:db8::/32");
        assert_eq!(p("0.0.0.0/0").len(), 0);
        assert!("193.2.0.1/15".parse::<Prefix>().is_err());
        assert!("193.2.0.0/33".parse::<Prefix>().is_err());
        assert!("193.2.0.0".parse::<Prefix>().is_err());
        assert!("193.002.0.0/16".parse::<Prefix>().is_err());
        assert!("193.2.0.0/+8".parse::<Prefix>().is_err());
        assert!("::/129".parse::<Prefix>().is_err());
    }

    #[test]
    fn covering() {
        let outer = p("193.2.0.0/15");
        assert!(outer.covers(&p("193.2.35.0/24")));
        assert!(outer.covers(&p("193.3.255.0/24")));
        assert!(!outer.covers(&p("193.4.0.0/24")));
        assert!(outer.covers(&outer));
        assert!(!outer.strictly_covers(&outer));
        assert!(!p("0.0.0.0/0").covers(&p("::/0")));
        assert!(p("::/0").covers(&p("2001:db8::/32")));
    }

    #[test]
    fn asn_forms() {
        assert_eq!("AS64512".parse::<Asn>().unwrap(), Asn(64512));
        assert_eq!("3215".parse::<Asn>().unwrap(), Asn(3215));
        assert!("AS".parse::<Asn>().is_err());
        assert!("AS-1".parse::<Asn>().is_err());
        assert!("4294967296".parse::<Asn>().is_err());
        assert_eq!(Asn(3215).to_string(), "3215");
    }

    #[test]
    fn bogons() {
        let f = BogonFilter::default();
        assert!(f.is_bogon(Asn(0)));
        assert!(f.is_bogon(Asn(23456)));
        assert!(f.is_bogon(Asn(64512)));
        assert!(f.is_bogon(Asn(4_200_000_001)));
        assert!(!f.is_bogon(Asn(3215)));
        assert!(!f.is_bogon(Asn(131072)));
        assert!(!BogonFilter::none().is_bogon(Asn(0)));
    }

    proptest! {
        #[test]
        fn v4_text_round_trip(addr in any::<u32>(), len in 0u8..=32) {
            let pfx = Prefix::new_truncated(IpAddr::V4(Ipv4Addr::from(addr)), len).unwrap();
            let back: Prefix = pfx.to_string().parse().unwrap();
            prop_assert_eq!(back, pfx);
        }

        #[test]
        fn v6_text_round_trip(addr in any::<u128>(), len in 0u8..=128) {
            let pfx = Prefix::new_truncated(IpAddr::V6(Ipv6Addr::from(addr)), len).unwrap();
            let back: Prefix = pfx.to_string().parse().unwrap();
            prop_assert_eq!(back, pfx);
        }
    }
}
