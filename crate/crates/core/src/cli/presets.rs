//! Built-in scenarios. Each one is plain configuration text, parsed through
//! the same path as user files.

#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub text: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "conservative",
        description: "no damping, no thermal coupling, no heat: the energy is conserved",
        text: "rho1 = 1\n\
            rho2 = 1\n\
            rho3 = 1\n\
            b = 2\n\
            k = 4\n\
            delta = 0\n\
            tau = 0.5\n\
            beta = 1\n\
            law = linear\n\
            profile = none\n\
            heat_amplitude = 0\n\
            N = 128\n\
            dt = 5e-3\n\
            T = 50\n\
            sample_every = 20\n",
    },
    Preset {
        name: "linear",
        description: "linear damping g(s) = s on the whole beam",
        text: "rho1 = 1\n\
            rho2 = 1\n\
            rho3 = 1\n\
            b = 2\n\
            k = 4\n\
            delta = 0.5\n\
            tau = 0.5\n\
            beta = 1\n\
            law = linear\n\
            c = 1\n\
            profile = global\n\
            N = 256\n\
            dt = 1e-3\n\
            T = 10\n\
            sample_every = 10\n",
    },
    Preset {
        name: "example1_p2",
        description: "power damping g(s) = s|s| on the whole beam, temperature mean 0.3",
        text: "rho1 = 1\n\
            rho2 = 1\n\
            rho3 = 1\n\
            b = 2\n\
            k = 4\n\
            delta = 0.5\n\
            tau = 0.5\n\
            beta = 1\n\
            law = power\n\
            p = 2\n\
            profile = global\n\
            amplitude = 0.05\n\
            heat_amplitude = 0.05\n\
            theta_mean = 0.3\n\
            N = 128\n\
            dt = 1e-2\n\
            T = 200\n\
            sample_every = 10\n",
    },
    Preset {
        name: "example1_p3",
        description: "power damping g(s) = s^3 on the whole beam",
        text: "rho1 = 1\n\
            rho2 = 1\n\
            rho3 = 1\n\
            b = 2\n\
            k = 4\n\
            delta = 0.5\n\
            tau = 0.5\n\
            beta = 1\n\
            law = power\n\
            p = 3\n\
            profile = global\n\
            amplitude = 0.05\n\
            heat_amplitude = 0.05\n\
            N = 128\n\
            dt = 1e-2\n\
            T = 200\n\
            sample_every = 10\n",
    },
    Preset {
        name: "example2",
        description: "damping g(s) = (1/s) exp(-(ln s)^2), convex region r0 = e^-1.5",
        text: "rho1 = 1\n\
            rho2 = 1\n\
            rho3 = 1\n\
            b = 2\n\
            k = 4\n\
            delta = 0.5\n\
            tau = 0.5\n\
            beta = 1\n\
            law = example2\n\
            profile = global\n\
            amplitude = 0.01\n\
            heat_amplitude = 0.01\n\
            N = 128\n\
            dt = 1e-2\n\
            T = 100\n\
            sample_every = 10\n",
    },
    Preset {
        name: "bump_omega",
        description: "power damping p = 2 localized on a smooth bump over (0.3, 0.7)",
        text: "rho1 = 1\n\
            rho2 = 1\n\
            rho3 = 1\n\
            b = 2\n\
            k = 4\n\
            delta = 0.5\n\
            tau = 0.5\n\
            beta = 1\n\
            law = power\n\
            p = 2\n\
            profile = bump\n\
            omega = 0.3, 0.7\n\
            amplitude = 0.05\n\
            heat_amplitude = 0.05\n\
            theta_mean = 0.3\n\
            N = 128\n\
            dt = 1e-2\n\
            T = 100\n\
            sample_every = 10\n",
    },
    Preset {
        name: "equal_speeds_chi0",
        description: "equal wave speeds without thermal coupling, stability number 0",
        text: "rho1 = 1\n\
            rho2 = 1\n\
            rho3 = 1\n\
            b = 1\n\
            k = 1\n\
            delta = 0\n\
            tau = 0.5\n\
            beta = 1\n\
            law = power\n\
            p = 2\n\
            profile = global\n\
            amplitude = 0.05\n\
            heat_amplitude = 0.05\n\
            N = 128\n\
            dt = 1e-2\n\
            T = 100\n\
            sample_every = 10\n",
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

/// `(name, description)` pairs for `--list`.
pub fn list_presets() -> Vec<(&'static str, &'static str)> {
    PRESETS.iter().map(|p| (p.name, p.description)).collect()
}
