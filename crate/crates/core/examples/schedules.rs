//! The scheduled noise multipliers, tabulated over training progress.

use redit::rewards::{Schedule, ScheduleKind};

fn main() {
    let fractions = [0.0, 0.25, 0.5, 0.75, 1.0];
    print!("{:<20}", "schedule");
    for p in fractions {
        print!("{p:>8}");
    }
    println!();
    for kind in ScheduleKind::SCHEDULED {
        let s = Schedule::new(kind, 1000);
        print!("{:<20}", format!("{kind:?}"));
        for p in fractions {
            print!("{:>8.4}", s.scale_at_fraction(p));
        }
        println!();
    }
    let s = Schedule::new(ScheduleKind::Cosine, 1000);
    println!("cosine at step 500 = {:.4}, clamped past 1000: {}", s.scale(500), s.is_clamped(1001));
}
