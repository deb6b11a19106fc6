lemma {:axiom} Assumed(x: int)
  ensures x * 0 == 0

lemma Proved(x: int)
  requires x > 0
  ensures x * x > 0
{
}

method UseIt()
{
  Proved(3);
}
