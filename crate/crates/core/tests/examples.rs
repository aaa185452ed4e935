// Every runnable example is compiled into this target and executed once.

macro_rules! example {
    ($name:ident) => {
        mod $name {
            include!(concat!("../examples/", stringify!($name), ".rs"));

            #[test]
            fn runs() {
                main().unwrap();
            }
        }
    };
}

example!(biased_mean_risk);
example!(closed_forms);
example!(custom_two_module);
example!(hpv_per_country);
example!(idealized_lemma1);
example!(random_effects_table);
example!(samplers_tour);
