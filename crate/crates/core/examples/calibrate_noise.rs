use nirs_core::physio::snr::{calibrate_noise_sigma, snr_bench, BENCH_DURATION_S, BENCH_SEED, REFERENCE_SNR_DB};
use nirs_core::{DeviceConfig, OpticalTable};

fn main() {
    let optics = OpticalTable::standard();
    let mut device = DeviceConfig::default();
    let sigma = calibrate_noise_sigma(&device, &optics, REFERENCE_SNR_DB).expect("calibration");
    device.afe.noise_sigma_v = sigma;
    let report = snr_bench(&device, &optics, BENCH_DURATION_S, BENCH_SEED).expect("bench");
    println!("noise_sigma_v = {sigma:.6e}");
    println!("mean {:.3} dB, min {:.3} dB, max {:.3} dB", report.mean_db, report.min_db, report.max_db);
}
