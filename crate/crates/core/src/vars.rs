//! Canonical variable names used in panel files.

pub const VOL_CF: &str = "VolCF";
pub const VOL_FX: &str = "VolFX";
pub const CAPITAL_FLOW: &str = "CapitalFlow";
pub const FX_INDEX: &str = "FXIndex";
pub const EQUITY_INDEX: &str = "EquityIndex";
pub const COMMODITY_INDEX: &str = "CommodityIndex";
pub const EQUITY_RETURN: &str = "EquityReturn";
pub const COMMODITY_RETURN: &str = "CommodityReturn";
pub const VIX: &str = "VIX";

pub const REAL_GDP_GROWTH: &str = "RealGDPGrowth";
pub const TRADE_OPENNESS: &str = "TradeOpenness";
pub const FX_RESERVES: &str = "FXReserves";
pub const TFI: &str = "TFI";
pub const CREDIT_PRIVATE: &str = "CreditPrivate";
pub const SHORT_RATE: &str = "ShortRate";
pub const FISCAL_SURPLUS: &str = "FiscalSurplus";
pub const FINANCIAL_DEVELOPMENT: &str = "FinancialDevelopment";
pub const FX_REGIME: &str = "FXRegime";
pub const CAPITAL_CONTROL: &str = "CapitalControl";

/// Fundamentals fed to the clustering step.
pub const CLUSTER_FACTORS: [&str; 8] = [
    REAL_GDP_GROWTH,
    TRADE_OPENNESS,
    FX_RESERVES,
    TFI,
    CREDIT_PRIVATE,
    SHORT_RATE,
    FISCAL_SURPLUS,
    FINANCIAL_DEVELOPMENT,
];

/// Moderating factors of the interaction regressions (credit to the private
/// sector is left out: it is nearly collinear with financial development).
pub const MODERATING_FACTORS: [&str; 7] = [
    REAL_GDP_GROWTH,
    TRADE_OPENNESS,
    FX_RESERVES,
    TFI,
    SHORT_RATE,
    FISCAL_SURPLUS,
    FINANCIAL_DEVELOPMENT,
];

/// The six significant moderating factors entering the composite.
pub const COMPOSITE_FACTORS: [&str; 6] = [TRADE_OPENNESS, FX_RESERVES, TFI, SHORT_RATE, FISCAL_SURPLUS, FINANCIAL_DEVELOPMENT];

/// Controls of the FGLS regressions.
pub const CONTROLS: [&str; 5] = [FX_REGIME, CAPITAL_CONTROL, EQUITY_RETURN, CAPITAL_FLOW, VIX];

/// Exogenous block of the VARX.
pub const VAR_EXOGENOUS: [&str; 3] = [EQUITY_RETURN, VIX, COMMODITY_RETURN];
