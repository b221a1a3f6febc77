//! Loop A in isolation: a solar day drives the battery, each broadcast lands
//! on the ledger, and the rental-duration menu follows the charge level.
//!
//! ```bash
//! cargo run --example energy_menu
//! ```

use no1s1::device::{step_energy, BatteryState, DeviceConfig, EnvSample};
use no1s1::loops::Pipeline;
use no1s1::sim::{genesis_world, solar_power, Scenario, SolarProfile};

fn main() {
    let mut scenario = Scenario::minimal(42, 86_400);
    scenario.device.initial_soc = 0.12;
    scenario.solar = SolarProfile {
        peak_w: 420.0,
        day_length_s: 86_400,
    };

    let (mut ledger, mut house) = genesis_world(&scenario).expect("valid scenario");
    let mut battery = BatteryState::new(&scenario.device);
    let mut pipeline = Pipeline::new(scenario.device.presence_samples);
    let config: DeviceConfig = scenario.device.clone();

    println!("hour  soc    alive  offered minutes");
    let mut last_menu: Option<Vec<u64>> = None;
    for step in 0..=(86_400 / 600) {
        let t = step * 600;
        let env = EnvSample::new(
            solar_power(battery.last_update, &scenario.solar),
            config.idle_load_w,
        );
        battery = step_energy(&battery, &env, t - battery.last_update, config.mppt_efficiency);
        pipeline
            .run_loop_a(&mut ledger, &mut house, battery.soc, t)
            .expect("broadcast accepted");

        if last_menu.as_ref() != Some(&pipeline.menu) {
            println!(
                "{:>4}  {:<5.3}  {:<5}  {:?}",
                t / 3600,
                battery.soc,
                house.energy().alive,
                pipeline.menu
            );
            last_menu = Some(pipeline.menu.clone());
        }
    }

    println!("\n{} energy broadcasts recorded on the ledger", ledger.log.len());
    println!("state root: {}", ledger.state_root());
}
