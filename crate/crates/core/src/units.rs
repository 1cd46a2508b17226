//! Interface-unit conversions. Internals are SI; depths and speeds cross the
//! public boundary in mm and mm/min.

pub fn mm_to_m(mm: f64) -> f64 {
    mm * 1e-3
}

pub fn m_to_mm(m: f64) -> f64 {
    m * 1e3
}

pub fn mmpm_to_m_s(mm_per_min: f64) -> f64 {
    mm_per_min / 60_000.0
}

pub fn m_s_to_mmpm(m_per_s: f64) -> f64 {
    m_per_s * 60_000.0
}
